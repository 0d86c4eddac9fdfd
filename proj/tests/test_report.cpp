#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "support.hpp"
#include "textcnn/checkpoint.hpp"
#include "textcnn/error.hpp"
#include "textcnn/report.hpp"

using namespace textcnn;
namespace fs = std::filesystem;
using textcnn::testing::read_file;
using textcnn::testing::scratch_dir;
using textcnn::testing::write_split;

namespace {

// Small TREC-format run on the synthetic question corpus.
RunConfig small_run(const fs::path& dir, std::uint64_t seed = 3) {
  const Dataset d = textcnn::testing::synthetic_trec(90, 30, seed);
  write_split(d, Split::train, dir / "train.txt");
  write_split(d, Split::test, dir / "test.txt");
  RunConfig c;
  c.dataset.train = dir / "train.txt";
  c.dataset.test = dir / "test.txt";
  c.embeddings.dim = 8;
  c.model.feature_maps = 5;
  c.model.batch_size = 32;
  c.model.epochs = 3;
  c.seed = seed;
  c.out = dir / "out";
  return c;
}

std::vector<std::string> bundle_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).string());
  std::sort(files.begin(), files.end());
  return files;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

}  // namespace

TEST(Table, CsvRoundTrip) {
  Table t;
  t.header = {"Class", "1-3", "Sum"};
  t.rows = {{"HUM", "16", "16"}, {"a,b", "say \"hi\"", ""}, {"line\nbreak", "x", "y"}};
  EXPECT_EQ(Table::from_csv(t.to_csv()).header, t.header);
  EXPECT_EQ(Table::from_csv(t.to_csv()).rows, t.rows);
  EXPECT_THROW(Table::from_csv("a,\"b\n"), ParseError);
}

TEST(Table, TextAlignsColumns) {
  Table t;
  t.header = {"", "3", "Sum"};
  t.rows = {{"L1", "2", "12"}, {"L2", "100", "7"}};
  EXPECT_EQ(t.to_text(), "      3  Sum\n------------\nL1    2   12\nL2  100    7\n");
}

TEST(ReportTables, ClassTableHasLayerSums) {
  CountTable c;
  c.row_names = {"HUM", "Other"};
  c.group_names = {"1-3", "1-4", "2-3", "2-4"};
  c.counts = {{3, 1, 0, 2}, {1, 3, 4, 2}};
  const Table t = class_count_table(c);
  EXPECT_EQ(t.header, (std::vector<std::string>{"Class", "1-3", "1-4", "Sum", "2-3", "2-4", "Sum"}));
  EXPECT_EQ(t.rows[0], (std::vector<std::string>{"HUM", "3", "1", "4", "0", "2", "2"}));
  EXPECT_EQ(t.rows[1], (std::vector<std::string>{"Other", "1", "3", "4", "4", "2", "6"}));
}

TEST(ReportTables, PairsAndBridgeTables) {
  const Tensor r = Tensor::matrix(3, 3, {1.0, 0.9, 0.05, 0.9, 1.0, 0.7, 0.05, 0.7, 1.0});
  const std::vector<CorrelationMatrix> groups{correlation_matrix_from(r, 1, 3), correlation_matrix_from(r, 2, 3)};
  const std::vector<double> thresholds{0.8, 0.6};
  const Table pairs = correlated_pairs_table(groups, thresholds);
  EXPECT_EQ(pairs.header, (std::vector<std::string>{"r", "1-3", "Sum", "2-3", "Sum"}));
  EXPECT_EQ(pairs.rows[0], (std::vector<std::string>{"> 0.8", "1", "1", "1", "1"}));
  EXPECT_EQ(pairs.rows[1], (std::vector<std::string>{"> 0.6", "2", "2", "2", "2"}));

  const std::vector<std::vector<Bridge>> bridges{find_bridges(groups[0]), find_bridges(groups[1])};
  const Table b = bridge_table(bridge_count_table(groups, bridges));
  EXPECT_EQ(b.header, (std::vector<std::string>{"", "3", "Sum"}));
  EXPECT_EQ(b.rows[0], (std::vector<std::string>{"L1", "1", "1"}));
  EXPECT_EQ(b.rows[1], (std::vector<std::string>{"L2", "1", "1"}));
}

TEST(Svg, SelfPairIsAnnotatedWithUnitCorrelation) {
  std::vector<double> x;
  for (int i = 0; i < 50; ++i) x.push_back((i * 37 % 50) / 10.0);
  const ActivationGraph g = activation_graph(x, x);
  const std::string svg = render_activation_graph_svg(g, {"1-3/#14", "1-3/#14"});
  EXPECT_NE(svg.find("r=1.00000"), std::string::npos);
  EXPECT_EQ(count_of(svg, "<polyline"), 2u);
  EXPECT_EQ(count_of(svg, "stroke-dasharray"), 2u);
  EXPECT_EQ(count_of(svg, "<svg"), 1u);
  EXPECT_EQ(count_of(svg, "</svg>"), 1u);
  EXPECT_EQ(count_of(svg, "<text"), count_of(svg, "</text>"));
  EXPECT_EQ(svg, render_activation_graph_svg(g, {"1-3/#14", "1-3/#14"}));
}

TEST(Svg, LabelsAreEscaped) {
  const std::vector<double> x{1, 2, 3}, y{3, 1, 2};
  const std::string svg = render_activation_graph_svg(activation_graph(x, y), {"a<b", "c&d"});
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_NE(svg.find("c&amp;d"), std::string::npos);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
}

TEST(Config, ParsesKeysAndResolvesPaths) {
  const RunConfig c = parse_run_config(R"({
    "dataset": {"format": "sst", "train": "data/train.txt", "test": "/abs/test.txt"},
    "embeddings": {"path": "vec.bin", "format": "binary", "dim": 300},
    "model": {"windows": [3, 4], "feature_maps": 16, "epochs": 4, "learning_rate": 0.002},
    "probe": {"split": "test", "top_k": 3},
    "thresholds": {"pairs": [0.9, 0.5], "bridge_low": 0.05, "bridge_high": 0.5},
    "graph": {"limit": 600, "slices": 4},
    "seed": 9,
    "out": "run1"
  })",
                                       "/base");
  EXPECT_EQ(c.dataset.format, "sst");
  EXPECT_EQ(c.dataset.train, fs::path("/base/data/train.txt"));
  EXPECT_EQ(c.dataset.test, fs::path("/abs/test.txt"));
  EXPECT_EQ(c.embeddings.path, fs::path("/base/vec.bin"));
  EXPECT_EQ(c.embeddings.format, EmbeddingFormat::binary);
  EXPECT_EQ(c.embeddings.dim, 300u);
  EXPECT_EQ(c.model.windows, (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(c.model.feature_maps, 16u);
  EXPECT_EQ(c.model.epochs, 4u);
  EXPECT_EQ(c.model.adam.lr, 0.002);
  EXPECT_EQ(c.model.batch_size, 128u);
  EXPECT_EQ(c.probe_split, ProbeSplit::test);
  EXPECT_EQ(c.top_k, 3u);
  EXPECT_EQ(c.pair_thresholds, (std::vector<double>{0.9, 0.5}));
  EXPECT_EQ(c.bridge_low, 0.05);
  EXPECT_EQ(c.graph_limit, 600u);
  EXPECT_EQ(c.graph_slices, 4u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.out, fs::path("/base/run1"));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_run_config(R"({"epochs": 3})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"model": {"epoch": 3}})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"dataset": {"format": "csv"}})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"thresholds": {"pairs": [0.6, 0.8]}})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"thresholds": {"bridge_low": 0.5}})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"probe": {"split": "dev"}})", "."), Error);
  EXPECT_THROW(parse_run_config("{not json", "."), Error);
  EXPECT_NO_THROW(parse_run_config("{}", "."));
}

TEST(Commands, TrainWritesMetricsAndManifest) {
  const fs::path dir = scratch_dir("report_train");
  const RunConfig c = small_run(dir);
  const TrainSummary s = cmd_train(c);
  const Table metrics = Table::from_csv(read_file(s.metrics));
  EXPECT_EQ(metrics.header, (std::vector<std::string>{"epoch", "train_loss", "test_accuracy"}));
  ASSERT_EQ(metrics.rows.size(), c.model.epochs);
  EXPECT_EQ(metrics.rows.back()[0], "3");

  const auto manifest = nlohmann::json::parse(read_file(s.manifest));
  EXPECT_EQ(manifest["epochs_completed"], 3);
  EXPECT_EQ(manifest["dataset"]["train_size"], 90);
  EXPECT_EQ(manifest["embeddings"]["source"], "random");

  const Model m = load_checkpoint(s.checkpoint);
  const Dataset d = load_run_dataset(c);
  const EmbeddingTable t = load_run_embeddings(c, d);
  EXPECT_EQ(manifest["test_accuracy"].get<double>(), evaluate(m, d, t, Split::test));
  EXPECT_EQ(std::stod(metrics.rows.back()[2]), evaluate(m, d, t, Split::test));
}

TEST(Commands, AnalyzeBundleIsConsistent) {
  const fs::path dir = scratch_dir("report_analyze");
  RunConfig c = small_run(dir);
  const TrainSummary s = cmd_train(c);
  const AnalysisSummary a = cmd_analyze(c, s.checkpoint, std::nullopt);
  for (const char* f : {"activations.tsv", "class_table.txt", "class_table.csv", "top_ngrams.txt", "kernel_labels.csv",
                        "pairs.txt", "pairs.csv", "bridges.csv", "bridge_counts.txt", "bridge_counts.csv",
                        "summary.json", "correlations/1-3.txt", "correlations/2-5.txt"}) {
    EXPECT_TRUE(fs::is_regular_file(c.out / f)) << f;
  }
  ASSERT_EQ(a.class_counts.group_names.size(), 6u);
  for (std::size_t g = 0; g < 6; ++g) EXPECT_EQ(a.class_counts.column_sum(g), c.model.feature_maps);
  EXPECT_EQ(a.class_counts.row_names.size(), 7u);

  const Table classes = Table::from_csv(read_file(c.out / "class_table.csv"));
  EXPECT_EQ(classes.rows.size(), 7u);
  const Table pairs = Table::from_csv(read_file(c.out / "pairs.csv"));
  ASSERT_EQ(pairs.rows.size(), 2u);
  for (std::size_t col = 1; col < pairs.header.size(); ++col)
    EXPECT_LE(std::stoul(pairs.rows[0][col]), std::stoul(pairs.rows[1][col]));
  const Table bridges = Table::from_csv(read_file(c.out / "bridges.csv"));
  for (const auto& row : bridges.rows) {
    EXPECT_LT(std::fabs(std::stod(row[4])), c.bridge_low);
    EXPECT_GT(std::fabs(std::stod(row[5])), c.bridge_high);
    EXPECT_GT(std::fabs(std::stod(row[6])), c.bridge_high);
  }
  const auto summary = nlohmann::json::parse(read_file(c.out / "summary.json"));
  EXPECT_EQ(summary["probe_split"], "all");
  EXPECT_EQ(summary["layers"]["L1"]["bridges"].get<std::size_t>(), a.bridge_counts.layer_sum(1));

  // Re-analyzing the exported matrix reproduces the bundle byte for byte.
  RunConfig again = c;
  again.out = dir / "from_activations";
  cmd_analyze(again, std::nullopt, c.out / "activations.tsv");
  std::vector<std::string> first = bundle_files(c.out);
  for (const char* f : {"activations.tsv", "checkpoint.bin", "manifest.json", "metrics.csv"}) std::erase(first, f);
  EXPECT_EQ(bundle_files(again.out), first);
  for (const std::string& f : first) EXPECT_EQ(read_file(again.out / f), read_file(c.out / f)) << f;
}

TEST(Commands, TrainAndAnalyzeAreDeterministic) {
  const fs::path a = scratch_dir("report_det_a");
  const fs::path b = scratch_dir("report_det_b");
  for (const fs::path& dir : {a, b}) {
    const RunConfig c = small_run(dir, 8);
    const TrainSummary s = cmd_train(c);
    cmd_analyze(c, s.checkpoint, std::nullopt);
  }
  const auto files = bundle_files(a / "out");
  ASSERT_EQ(bundle_files(b / "out"), files);
  for (const std::string& f : files) EXPECT_EQ(read_file(a / "out" / f), read_file(b / "out" / f)) << f;
}

TEST(Commands, PlotRejectsCrossGroupPairs) {
  const fs::path dir = scratch_dir("report_plot");
  const RunConfig c = small_run(dir);
  const TrainSummary s = cmd_train(c);
  const fs::path tsv = cmd_probe_export(c, s.checkpoint);
  const fs::path svg = cmd_plot(tsv, KernelId::parse("2-4/#1"), KernelId::parse("2-4/#1"), dir / "plots");
  const std::string text = read_file(svg);
  EXPECT_NE(text.find("r=1.00000"), std::string::npos);
  EXPECT_THROW(cmd_plot(tsv, KernelId::parse("1-3/#0"), KernelId::parse("1-4/#0"), dir / "plots"), Error);
  EXPECT_THROW(cmd_plot(tsv, KernelId::parse("1-3/#0"), KernelId::parse("1-3/#60"), dir / "plots"), Error);
  EXPECT_THROW(cmd_analyze(c, dir / "missing.bin", std::nullopt), Error);
}
