// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// any criterion fails.
//
// Criterion 5 needs the TREC question files and is skipped unless
// TEXTCNN_TREC_TRAIN and TEXTCNN_TREC_TEST point at them. TEXTCNN_EMBEDDINGS
// (with TEXTCNN_EMBEDDINGS_FORMAT=text|binary, default binary) adds the
// pretrained-vector run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradient_suite.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "textcnn/layers.hpp"
#include "textcnn/report.hpp"

using namespace textcnn;
using namespace textcnn::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Collects failed sub-checks; the criterion passes only if none failed.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) failed_.push_back(what);
  }
  bool ok() const { return failed_.empty(); }
  std::string failures() const {
    std::string s;
    for (const std::string& f : failed_) s += (s.empty() ? "" : "; ") + f;
    return s;
  }
  Outcome outcome(const std::string& detail) const {
    return ok() ? Outcome{Status::pass, detail} : Outcome{Status::fail, detail + " | failed: " + failures()};
  }

 private:
  std::vector<std::string> failed_;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  constexpr std::size_t instances = 20;
  constexpr double tolerance = 1e-4;
  constexpr double time_limit = 30.0;
  Timer timer;
  Checks checks;
  std::string worst_case;
  double worst = 0.0;
  for (const std::string& name : gradient_case_names()) {
    const LayerGradientReport r = run_gradient_case(name, instances, 2024);
    checks.require(r.instances >= instances, name + " ran " + std::to_string(r.instances) + " instances");
    checks.require(r.worst_relative_error < tolerance,
                   name + " rel err " + fmt("%.3g", r.worst_relative_error));
    if (r.worst_relative_error >= worst) {
      worst = r.worst_relative_error;
      worst_case = name;
    }
  }
  const double elapsed = timer.seconds();
  checks.require(elapsed < time_limit, "runtime " + fmt("%.1f s", elapsed));
  return checks.outcome(std::to_string(gradient_case_names().size()) + " cases x " + std::to_string(instances) +
                        " instances at eps 1e-5, worst rel err " + fmt("%.3g", worst) + " (" + worst_case +
                        ", tol 1e-4), " + fmt("%.1f s", elapsed));
}

Outcome oracle_equivalence() {
  Checks checks;
  Rng rng(2025);
  std::size_t bridges = 0;
  const std::vector<double> thresholds{0.8, 0.6};
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor r = random_symmetric(10, rng);
    const CorrelationMatrix cm = correlation_matrix_from(r);
    const std::vector<Bridge> found = find_bridges(cm, 0.1, 0.4);
    checks.require(found == brute_force_bridges(r, 0.1, 0.4), "bridges differ in trial " + std::to_string(trial));
    bridges += found.size();
    const std::vector<std::size_t> counts = count_correlated_pairs(cm, thresholds);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      checks.require(counts[t] == brute_force_pairs(r, thresholds[t]),
                     "pair count differs in trial " + std::to_string(trial));
    }
  }
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-5.0, 5.0);
      y[i] = 0.5 * x[i] + rng.uniform(-5.0, 5.0);
    }
    worst = std::max(worst, std::fabs(pearson(x, y).r - two_pass_pearson(x, y)));
  }
  checks.require(worst <= 1e-12, "pearson deviates by " + fmt("%.3g", worst));
  return checks.outcome("100 random 10x10 matrices (" + std::to_string(bridges) +
                        " bridges) match brute force; pearson max |diff| vs two-pass " + fmt("%.3g", worst) +
                        " (tol 1e-12)");
}

Outcome hand_values() {
  Checks checks;
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
  const double r = pearson(x, y).r;
  checks.require(std::fabs(r - 0.8) <= 1e-12, "pearson " + fmt("%.17g", r));

  const DenseSoftmaxResult uniform =
      dense_softmax_xent(std::vector<double>{0.5, -0.25, 2.0}, Tensor({6, 3}), Tensor({6}), 2);
  checks.require(std::fabs(uniform.loss - std::log(6.0)) <= 1e-12, "uniform loss " + fmt("%.17g", uniform.loss));

  ConvParams ones(3, 1, 1);
  ones.weights = Tensor({1, 3, 1}, 1.0);
  ones.bias = Tensor({1}, 0.0);
  const Tensor sums = conv_valid_forward(Tensor::matrix(4, 1, {1, 2, 3, 4}), ones);
  checks.require(sums.size() == 2 && sums[0] == 6.0 && sums[1] == 9.0, "conv sliding sums");
  return checks.outcome("pearson = " + fmt("%.15f", r) + ", uniform loss - ln 6 = " +
                        fmt("%.3g", uniform.loss - std::log(6.0)) + ", conv sums = [" +
                        (sums.size() == 2 ? fmt("%g", sums[0]) + ", " + fmt("%g", sums[1]) : std::string("?")) +
                        "]");
}

Outcome training_sanity() {
  constexpr double time_limit = 60.0;
  Timer timer;
  const Dataset d = marker_corpus(160, 40, 1);
  const EmbeddingTable t = EmbeddingTable::random(vocabulary(d), 20, 1);
  ModelConfig cfg;
  cfg.embed_dim = 20;
  cfg.num_classes = 2;
  Model m = build_model(cfg, 1);
  const std::vector<EpochMetrics> history = train(m, d, t);
  const double elapsed = timer.seconds();
  double best = 0.0;
  std::size_t best_epoch = 0;
  for (const EpochMetrics& e : history) {
    if (*e.test_accuracy > best) {
      best = *e.test_accuracy;
      best_epoch = e.epoch;
    }
  }
  Checks checks;
  checks.require(history.size() == 10, "ran " + std::to_string(history.size()) + " epochs");
  checks.require(best == 1.0, "test accuracy never reached 1.0");
  checks.require(elapsed < time_limit, "runtime " + fmt("%.1f s", elapsed));
  return checks.outcome("200-sentence marker corpus (160/40), 20-d random vectors: best test accuracy " +
                        fmt("%.3f", best) + " at epoch " + std::to_string(best_epoch) + ", final " +
                        fmt("%.3f", *history.back().test_accuracy) + ", " + fmt("%.1f s", elapsed));
}

// ---------------------------------------------------------------------------
// Pipeline runs.

struct PipelineRun {
  RunConfig config;
  TrainSummary train;
  AnalysisSummary analysis;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const RunConfig& config) {
  Timer timer;
  PipelineRun run;
  run.config = config;
  run.train = cmd_train(config);
  run.analysis = cmd_analyze(config, run.train.checkpoint, std::nullopt);
  run.seconds = timer.seconds();
  return run;
}

// Reference run: synthetic corpus at the TREC split size (5452 / 500),
// default model, random 300-d vectors.
RunConfig reference_config(const fs::path& dir) {
  const Dataset d = synthetic_trec(5452, 500, 1);
  write_split(d, Split::train, dir / "train.txt");
  write_split(d, Split::test, dir / "test.txt");
  RunConfig c;
  c.dataset.train = dir / "train.txt";
  c.dataset.test = dir / "test.txt";
  c.embeddings.dim = 300;
  c.embeddings.seed = 13;
  c.seed = 1;
  c.out = dir / "out";
  return c;
}

json reference_record(const PipelineRun& run) {
  json record;
  record["corpus"] = {{"generator", "synthetic_trec"}, {"train", 5452}, {"test", 500}, {"seed", 1}};
  record["manifest"] = json::parse(read_file(run.train.manifest));
  record["summary"] = json::parse(read_file(run.config.out / "summary.json"));
  return record;
}

// Structure checks that hold for any trained six-class model.
void check_structure(const PipelineRun& run, std::size_t feature_maps, Checks& checks, const std::string& tag) {
  const AnalysisSummary& a = run.analysis;
  checks.require(a.class_counts.row_names.size() == 7, tag + ": class table rows");
  checks.require(a.class_counts.group_names.size() == 6, tag + ": class table groups");
  for (std::size_t g = 0; g < a.class_counts.group_names.size(); ++g) {
    checks.require(a.class_counts.column_sum(g) == feature_maps,
                   tag + ": group " + a.class_counts.group_names[g] + " sums to " +
                       std::to_string(a.class_counts.column_sum(g)));
  }
  for (std::size_t g = 0; g < a.pair_counts.size(); ++g) {
    checks.require(a.pair_counts[g][0] <= a.pair_counts[g][1],
                   tag + ": group " + a.correlations[g].name() + " count(>0.8) > count(>0.6)");
  }
  std::size_t bad = 0;
  for (const auto& list : a.bridges)
    for (const Bridge& b : list)
      if (!(b.i < b.j && std::fabs(b.r_ij) < 0.1 && std::fabs(b.r_ik) > 0.4 && std::fabs(b.r_jk) > 0.4)) ++bad;
  checks.require(bad == 0, tag + ": " + std::to_string(bad) + " bridges violate the thresholds");
  const Table classes = Table::from_csv(read_file(run.config.out / "class_table.csv"));
  checks.require(classes.rows.size() == 7, tag + ": class_table.csv rows");
}

std::size_t layer_pairs(const json& summary, const char* layer, std::size_t threshold) {
  return summary["layers"][layer]["pairs"][threshold].get<std::size_t>();
}

std::size_t layer_bridges(const json& summary, const char* layer) {
  return summary["layers"][layer]["bridges"].get<std::size_t>();
}

Outcome trec_desk_scale(std::optional<PipelineRun>& trec_run) {
  const auto train_path = env("TEXTCNN_TREC_TRAIN");
  const auto test_path = env("TEXTCNN_TREC_TEST");
  if (!train_path || !test_path) {
    return {Status::skip,
            "TREC files not provided (set TEXTCNN_TREC_TRAIN and TEXTCNN_TREC_TEST; TEXTCNN_EMBEDDINGS for "
            "pretrained 300-d vectors)"};
  }
  Checks checks;
  std::string detail;
  const fs::path dir = scratch_dir("acceptance_trec");
  RunConfig c;
  c.dataset.train = *train_path;
  c.dataset.test = *test_path;
  c.embeddings.dim = 300;
  c.seed = 1;
  c.out = dir / "random";
  const PipelineRun random = run_pipeline(c);
  const double random_acc = random.train.test_accuracy.value_or(0.0);
  checks.require(random.train.history.size() == 10, "random-vector run epochs");
  checks.require(random_acc >= 0.55, "random-vector accuracy " + fmt("%.4f", random_acc) + " < 0.55");
  detail = "random 300-d vectors: test accuracy " + fmt("%.4f", random_acc) + " (floor 0.55)";
  trec_run = random;

  if (const auto vectors = env("TEXTCNN_EMBEDDINGS")) {
    RunConfig p = c;
    p.embeddings.path = *vectors;
    p.embeddings.format = env("TEXTCNN_EMBEDDINGS_FORMAT").value_or("binary") == "text" ? EmbeddingFormat::text
                                                                                         : EmbeddingFormat::binary;
    p.out = dir / "pretrained";
    const PipelineRun pretrained = run_pipeline(p);
    const double acc = pretrained.train.test_accuracy.value_or(0.0);
    checks.require(pretrained.train.history.size() == 10, "pretrained run epochs");
    checks.require(acc >= 0.80, "pretrained accuracy " + fmt("%.4f", acc) + " < 0.80");
    detail += "; pretrained vectors: test accuracy " + fmt("%.4f", acc) + " (floor 0.80)";
    trec_run = pretrained;
  } else {
    detail += "; pretrained-vector check skipped (TEXTCNN_EMBEDDINGS not set)";
  }
  return checks.outcome(detail);
}

Outcome pipeline_structure(const fs::path& golden_path, bool write_golden, const std::optional<PipelineRun>& trec_run) {
  Checks checks;
  const fs::path dir = scratch_dir("acceptance_reference");
  const RunConfig config = reference_config(dir);
  const PipelineRun run = run_pipeline(config);
  check_structure(run, config.model.feature_maps, checks, "reference");
  if (trec_run) check_structure(*trec_run, trec_run->config.model.feature_maps, checks, "trec");

  const json fresh = reference_record(run);
  if (write_golden) {
    fs::create_directories(golden_path.parent_path());
    std::ofstream(golden_path) << fresh.dump(2) << '\n';
  }
  if (!fs::is_regular_file(golden_path)) {
    checks.require(false, "golden manifest missing: " + golden_path.string());
    return checks.outcome("reference run");
  }
  const json golden = json::parse(read_file(golden_path));
  checks.require(golden == fresh, "reference run does not reproduce the golden manifest");

  const json& s = golden["summary"];
  const std::size_t p1_hi = layer_pairs(s, "L1", 0), p2_hi = layer_pairs(s, "L2", 0);
  const std::size_t p1_lo = layer_pairs(s, "L1", 1), p2_lo = layer_pairs(s, "L2", 1);
  const std::size_t b1 = layer_bridges(s, "L1"), b2 = layer_bridges(s, "L2");
  checks.require(p2_hi > p1_hi, "golden pairs at r>0.8 not larger in layer 2");
  checks.require(p2_lo > p1_lo, "golden pairs at r>0.6 not larger in layer 2");
  checks.require(b2 > b1, "golden bridges not larger in layer 2");
  return checks.outcome("7x6 class table, 64 per group, monotone pair counts, bridge predicate" +
                        std::string(trec_run ? " (reference and TREC runs)" : " (reference run)") +
                        "; golden L1/L2 pairs >0.8 " + std::to_string(p1_hi) + "/" + std::to_string(p2_hi) +
                        ", >0.6 " + std::to_string(p1_lo) + "/" + std::to_string(p2_lo) + ", bridges " +
                        std::to_string(b1) + "/" + std::to_string(b2) + "; reference run " +
                        fmt("%.0f s", run.seconds));
}

std::vector<std::string> bundle_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).string());
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism() {
  Checks checks;
  std::vector<fs::path> outs;
  for (const char* name : {"acceptance_det_a", "acceptance_det_b"}) {
    const fs::path dir = scratch_dir(name);
    const Dataset d = synthetic_trec(300, 100, 4);
    write_split(d, Split::train, dir / "train.txt");
    write_split(d, Split::test, dir / "test.txt");
    RunConfig c;
    c.dataset.train = dir / "train.txt";
    c.dataset.test = dir / "test.txt";
    c.embeddings.dim = 50;
    c.seed = 4;
    c.out = dir / "out";
    run_pipeline(c);
    outs.push_back(c.out);
  }
  const std::vector<std::string> files = bundle_files(outs[0]);
  checks.require(files == bundle_files(outs[1]), "bundles list different files");
  std::size_t bytes = 0;
  for (const std::string& f : files) {
    const std::string a = read_file(outs[0] / f);
    checks.require(fs::is_regular_file(outs[1] / f) && a == read_file(outs[1] / f), f + " differs");
    bytes += a.size();
  }
  return checks.outcome("two train + analyze runs: " + std::to_string(files.size()) + " files, " +
                        std::to_string(bytes) + " bytes, identical");
}

Outcome activation_graph_contract() {
  Checks checks;
  const fs::path dir = scratch_dir("acceptance_graph");
  const Dataset d = synthetic_trec(400, 100, 5);
  write_split(d, Split::train, dir / "train.txt");
  write_split(d, Split::test, dir / "test.txt");
  RunConfig c;
  c.dataset.train = dir / "train.txt";
  c.dataset.test = dir / "test.txt";
  c.embeddings.dim = 50;
  c.seed = 5;
  c.out = dir / "out";
  const TrainSummary s = cmd_train(c);
  const fs::path tsv = cmd_probe_export(c, s.checkpoint);
  std::ifstream in(tsv);
  const ActivationMatrix matrix = read_activation_matrix(in);
  std::string detail;
  for (const char* id : {"1-3/#14", "2-5/#14"}) {
    const KernelId k = KernelId::parse(id);
    const ActivationGroup& g = matrix.group(k.layer, k.window);
    const std::span<const double> row = g.row(k.index);
    const ActivationGraph graph = activation_graph(row, row);
    const std::size_t expected = std::min<std::size_t>(1200, row.size());
    checks.require(graph.first == graph.second, std::string(id) + " series differ");
    checks.require(graph.first.size() == expected && graph.second.size() == expected,
                   std::string(id) + " length " + std::to_string(graph.first.size()));
    const std::string svg = read_file(cmd_plot(tsv, k, k, dir / "plots"));
    checks.require(svg.find("r=1.00000") != std::string::npos, std::string(id) + " annotation");
    detail += (detail.empty() ? "" : ", ") + std::string(id) + " with itself: N=" + std::to_string(row.size()) +
              " -> " + std::to_string(graph.first.size()) + " points";
  }
  return checks.outcome(detail + ", series equal, annotated r=1.00000");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textcnn acceptance criteria"};
  fs::path golden = "tests/golden/reference_run.json";
  bool write_golden = false;
  app.add_option("--golden", golden, "golden manifest of the reference run");
  app.add_flag("--write-golden", write_golden, "regenerate the golden manifest from this run");
  CLI11_PARSE(app, argc, argv);

  std::optional<PipelineRun> trec_run;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1 gradient suite", gradient_suite},
      {"C2 oracle equivalence", oracle_equivalence},
      {"C3 hand values", hand_values},
      {"C4 training sanity", training_sanity},
      {"C5 TREC desk scale", [&] { return trec_desk_scale(trec_run); }},
      {"C6 pipeline structure", [&] { return pipeline_structure(golden, write_golden, trec_run); }},
      {"C7 determinism", determinism},
      {"C8 activation graph", activation_graph_contract},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("error: ") + e.what()};
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    if (o.status == Status::fail) ++failures;
    std::printf("%s %s: %s\n", tag, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
