#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textcnn/analysis.hpp"
#include "textcnn/model.hpp"
#include "textcnn/text_data.hpp"

namespace textcnn {

// Plain rectangular table, rendered as aligned text or CSV.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_text() const;
  std::string to_csv() const;
  static Table from_csv(std::string_view text);
};

// Class rows (plus Other) against layer-1 groups, layer-1 sum, layer-2
// groups, layer-2 sum.
Table class_count_table(const CountTable& counts);
// One row per threshold ("> 0.8"), same column layout as class_count_table.
Table correlated_pairs_table(std::span<const CorrelationMatrix> groups,
                             std::span<const double> thresholds);
// Rows L1/L2, one column per window plus Sum.
Table bridge_table(const BridgeTable& counts);

struct GraphLabels {
  std::string first;
  std::string second;
};

// Two polylines on shared axes with dashed slice boundaries and an
// "r=0.12345" annotation. Output bytes depend only on the inputs.
std::string render_activation_graph_svg(const ActivationGraph& graph, const GraphLabels& labels);

struct DatasetSource {
  std::string format = "trec";  // trec | sst
  std::filesystem::path train;
  std::optional<std::filesystem::path> test;
};

struct EmbeddingSource {
  // When no path is set, seeded random vectors are generated for the
  // dataset vocabulary.
  std::optional<std::filesystem::path> path;
  EmbeddingFormat format = EmbeddingFormat::text;
  // Must match the file when both are given; random vectors default to 300.
  std::optional<std::size_t> dim;
  std::uint64_t seed = 13;
};

struct RunConfig {
  DatasetSource dataset;
  EmbeddingSource embeddings;
  ModelConfig model;
  ProbeSplit probe_split = ProbeSplit::all;
  std::size_t top_k = 4;
  std::vector<double> pair_thresholds{0.8, 0.6};
  double bridge_low = 0.1;
  double bridge_high = 0.4;
  std::size_t graph_limit = 1200;
  std::size_t graph_slices = 3;
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;

  // Thresholds in (0,1) with pair thresholds descending; with
  // `check_inputs`, also that the dataset and embedding files are readable.
  void validate(bool check_inputs = true) const;
};

// JSON document; relative paths resolve against `base_dir`. Unknown keys are
// rejected so typos do not silently fall back to defaults.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

Dataset load_run_dataset(const RunConfig& config);
EmbeddingTable load_run_embeddings(const RunConfig& config, const Dataset& dataset);

struct TrainSummary {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path manifest;
  std::vector<EpochMetrics> history;
  std::optional<double> test_accuracy;
};

// Writes checkpoint.bin, metrics.csv and manifest.json into config.out.
TrainSummary cmd_train(const RunConfig& config);

// Writes activations.tsv into config.out; returns its path.
std::filesystem::path cmd_probe_export(const RunConfig& config,
                                       const std::filesystem::path& checkpoint);

struct AnalysisSummary {
  CountTable class_counts;
  std::vector<CorrelationMatrix> correlations;
  std::vector<std::vector<std::size_t>> pair_counts;  // [group][threshold]
  std::vector<std::vector<Bridge>> bridges;           // [group]
  BridgeTable bridge_counts;
};

// Runs labeling, correlation, pair counting and bridge detection on an
// activation matrix and writes the report bundle into `out_dir`.
AnalysisSummary analyze_activations(const ActivationMatrix& matrix, const RunConfig& config,
                                    const std::filesystem::path& out_dir);

// Probes the checkpointed model (or reads an exported matrix when
// `activations` is given) and writes the full report bundle.
AnalysisSummary cmd_analyze(const RunConfig& config,
                            const std::optional<std::filesystem::path>& checkpoint,
                            const std::optional<std::filesystem::path>& activations);

// Renders the activation graph of two kernels from an exported matrix.
std::filesystem::path cmd_plot(const std::filesystem::path& activations, const KernelId& first,
                               const KernelId& second, const std::filesystem::path& out_dir,
                               std::size_t limit = 1200, std::size_t slices = 3);

}  // namespace textcnn
