// textcnn: train a two-layer TextCNN and analyze what its kernels respond to.
//
//   textcnn train        --config run.json [--seed N] [--out DIR]
//   textcnn probe-export --config run.json [--checkpoint FILE] [--out DIR]
//   textcnn analyze      --config run.json [--checkpoint FILE | --activations FILE] [--out DIR]
//   textcnn plot         --activations FILE --first 1-3/#14 --second 1-3/#28 [--out DIR]

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "textcnn/error.hpp"
#include "textcnn/report.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"TextCNN training and kernel analysis"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string checkpoint;
  std::string activations;
  std::string first, second;
  std::optional<std::size_t> limit, slices;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config_path, "run configuration (JSON)");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the run seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "train a model and write checkpoint, metrics and manifest");
  add_common(train, true);
  CLI::App* probe = app.add_subcommand("probe-export", "probe every kernel with n-grams and export activations");
  add_common(probe, true);
  probe->add_option("--checkpoint", checkpoint, "checkpoint (default: <out>/checkpoint.bin)");
  CLI::App* analyze = app.add_subcommand("analyze", "label kernels, count correlated pairs and bridges");
  add_common(analyze, false);
  analyze->add_option("--checkpoint", checkpoint, "checkpoint (default: <out>/checkpoint.bin)");
  analyze->add_option("--activations", activations, "analyze an exported activation matrix instead")
      ->check(CLI::ExistingFile);
  CLI::App* plot = app.add_subcommand("plot", "render the activation graph of two kernels as SVG");
  add_common(plot, false);
  plot->add_option("--activations", activations, "exported activation matrix")->required()->check(CLI::ExistingFile);
  plot->add_option("--first", first, "first kernel, e.g. 1-3/#14")->required();
  plot->add_option("--second", second, "second kernel, e.g. 1-3/#28")->required();
  plot->add_option("--limit", limit, "pairs kept after sorting (default 1200)");
  plot->add_option("--slices", slices, "number of slices (default 3)");

  CLI11_PARSE(app, argc, argv);

  try {
    textcnn::RunConfig config;
    if (!config_path.empty()) config = textcnn::load_run_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.out = out_dir;
    const fs::path default_checkpoint = config.out / "checkpoint.bin";

    if (train->parsed()) {
      const textcnn::TrainSummary s = textcnn::cmd_train(config);
      for (const textcnn::EpochMetrics& e : s.history) {
        std::cout << "epoch " << e.epoch << "  loss " << textcnn::format_double(e.train_loss);
        if (e.test_accuracy) std::cout << "  test_acc " << textcnn::format_double(*e.test_accuracy);
        std::cout << '\n';
      }
      std::cout << "wrote " << s.checkpoint.string() << '\n';
    } else if (probe->parsed()) {
      const fs::path path =
          textcnn::cmd_probe_export(config, checkpoint.empty() ? default_checkpoint : fs::path(checkpoint));
      std::cout << "wrote " << path.string() << '\n';
    } else if (analyze->parsed()) {
      std::optional<fs::path> act, ckpt;
      if (!activations.empty()) {
        act = activations;
      } else {
        if (config_path.empty()) throw textcnn::Error("analyze without --activations needs --config");
        ckpt = checkpoint.empty() ? default_checkpoint : fs::path(checkpoint);
      }
      const textcnn::AnalysisSummary s = textcnn::cmd_analyze(config, ckpt, act);
      std::cout << "L1 bridges " << s.bridge_counts.layer_sum(1) << ", L2 bridges " << s.bridge_counts.layer_sum(2)
                << "\nwrote report bundle to " << config.out.string() << '\n';
    } else if (plot->parsed()) {
      const fs::path path = textcnn::cmd_plot(activations, textcnn::KernelId::parse(first),
                                              textcnn::KernelId::parse(second), config.out,
                                              limit.value_or(config.graph_limit), slices.value_or(config.graph_slices));
      std::cout << "wrote " << path.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
