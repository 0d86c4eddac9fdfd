#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "model_json.hpp"
#include "textcnn/checkpoint.hpp"
#include "textcnn/error.hpp"
#include "textcnn/report.hpp"

namespace textcnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!obj.is_object()) throw Error("config: '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.contains(item.key())) throw Error("config: unknown key '" + section + "." + item.key() + "'");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string group_file_name(std::string name) {
  for (char& c : name)
    if (c == '/' || c == '#') c = '_';
  return name;
}

}  // namespace

void RunConfig::validate(bool check_inputs) const {
  if (pair_thresholds.empty()) throw Error("config: pair thresholds must be nonempty");
  for (std::size_t i = 0; i < pair_thresholds.size(); ++i) {
    const double t = pair_thresholds[i];
    if (!(t > 0.0 && t < 1.0)) throw Error("config: pair threshold " + format_double(t) + " outside (0, 1)");
    if (i > 0 && !(t < pair_thresholds[i - 1])) throw Error("config: pair thresholds must be descending");
  }
  if (!(bridge_low > 0.0 && bridge_low < bridge_high && bridge_high < 1.0)) {
    throw Error("config: bridge thresholds must satisfy 0 < low < high < 1");
  }
  if (top_k == 0) throw Error("config: top_k must be at least 1");
  if (graph_limit == 0 || graph_slices == 0) throw Error("config: graph limit and slices must be positive");
  if (dataset.format != "trec" && dataset.format != "sst") {
    throw Error("config: dataset.format must be 'trec' or 'sst'");
  }
  if (embeddings.dim && *embeddings.dim == 0) throw Error("config: embeddings.dim must be positive");
  if (!check_inputs) return;
  if (dataset.train.empty() || !fs::is_regular_file(dataset.train)) {
    throw Error("config: training file not found: " + dataset.train.string());
  }
  if (dataset.test && !fs::is_regular_file(*dataset.test)) {
    throw Error("config: test file not found: " + dataset.test->string());
  }
  if (embeddings.path && !fs::is_regular_file(*embeddings.path)) {
    throw Error("config: embedding file not found: " + embeddings.path->string());
  }
}

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    check_keys(doc, {"dataset", "embeddings", "model", "probe", "thresholds", "graph", "seed", "out"}, "");
    if (doc.contains("dataset")) {
      const json& d = doc.at("dataset");
      check_keys(d, {"format", "train", "test"}, "dataset");
      read_opt(d, "format", c.dataset.format);
      if (d.contains("train")) c.dataset.train = resolve(base_dir, d.at("train"));
      if (d.contains("test")) c.dataset.test = resolve(base_dir, d.at("test"));
    }
    if (doc.contains("embeddings")) {
      const json& e = doc.at("embeddings");
      check_keys(e, {"path", "format", "dim", "seed"}, "embeddings");
      if (e.contains("path")) c.embeddings.path = resolve(base_dir, e.at("path"));
      if (e.contains("format")) {
        const std::string f = e.at("format");
        if (f == "text") c.embeddings.format = EmbeddingFormat::text;
        else if (f == "binary") c.embeddings.format = EmbeddingFormat::binary;
        else throw Error("config: embeddings.format must be 'text' or 'binary'");
      }
      if (e.contains("dim")) c.embeddings.dim = e.at("dim").get<std::size_t>();
      read_opt(e, "seed", c.embeddings.seed);
    }
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      check_keys(m, {"windows", "feature_maps", "dropout_keep", "batch_size", "epochs", "learning_rate", "beta1",
                     "beta2", "adam_eps", "bn_momentum", "bn_epsilon"},
                 "model");
      read_opt(m, "windows", c.model.windows);
      read_opt(m, "feature_maps", c.model.feature_maps);
      read_opt(m, "dropout_keep", c.model.dropout_keep);
      read_opt(m, "batch_size", c.model.batch_size);
      read_opt(m, "epochs", c.model.epochs);
      read_opt(m, "learning_rate", c.model.adam.lr);
      read_opt(m, "beta1", c.model.adam.beta1);
      read_opt(m, "beta2", c.model.adam.beta2);
      read_opt(m, "adam_eps", c.model.adam.eps);
      read_opt(m, "bn_momentum", c.model.bn_momentum);
      read_opt(m, "bn_epsilon", c.model.bn_epsilon);
    }
    if (doc.contains("probe")) {
      const json& p = doc.at("probe");
      check_keys(p, {"split", "top_k"}, "probe");
      if (p.contains("split")) c.probe_split = parse_probe_split(p.at("split").get<std::string>());
      read_opt(p, "top_k", c.top_k);
    }
    if (doc.contains("thresholds")) {
      const json& t = doc.at("thresholds");
      check_keys(t, {"pairs", "bridge_low", "bridge_high"}, "thresholds");
      read_opt(t, "pairs", c.pair_thresholds);
      read_opt(t, "bridge_low", c.bridge_low);
      read_opt(t, "bridge_high", c.bridge_high);
    }
    if (doc.contains("graph")) {
      const json& g = doc.at("graph");
      check_keys(g, {"limit", "slices"}, "graph");
      read_opt(g, "limit", c.graph_limit);
      read_opt(g, "slices", c.graph_slices);
    }
    read_opt(doc, "seed", c.seed);
    if (doc.contains("out")) c.out = resolve(base_dir, doc.at("out"));
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate(false);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, path.parent_path());
}

Dataset load_run_dataset(const RunConfig& config) {
  const bool trec = config.dataset.format == "trec";
  auto load = [&](const fs::path& p, Split split, std::size_t first_id) {
    return trec ? load_trec(p, split, first_id) : load_sst(p, split, first_id);
  };
  Dataset ds = load(config.dataset.train, Split::train, 0);
  if (config.dataset.test) merge_into(ds, load(*config.dataset.test, Split::test, 0));
  ds.validate();
  return ds;
}

EmbeddingTable load_run_embeddings(const RunConfig& config, const Dataset& dataset) {
  const std::vector<std::string> vocab = vocabulary(dataset);
  if (!config.embeddings.path) {
    return EmbeddingTable::random(vocab, config.embeddings.dim.value_or(300), config.embeddings.seed);
  }
  const std::unordered_set<std::string> keep(vocab.begin(), vocab.end());
  EmbeddingTable table = load_embeddings(*config.embeddings.path, config.embeddings.format, &keep);
  if (config.embeddings.dim && *config.embeddings.dim != table.dim()) {
    throw Error("embedding file has dimension " + std::to_string(table.dim()) + " but config says " +
                std::to_string(*config.embeddings.dim));
  }
  return table;
}

namespace {

ModelConfig effective_model_config(const RunConfig& config, const Dataset& dataset,
                                   const EmbeddingTable& table) {
  ModelConfig m = config.model;
  m.num_classes = dataset.num_classes();
  m.embed_dim = table.dim();
  m.seed = config.seed;
  m.validate();
  return m;
}

ActivationMatrix probe_model(const RunConfig& config, const Model& model) {
  const Dataset dataset = load_run_dataset(config);
  const EmbeddingTable table = load_run_embeddings(config, dataset);
  if (table.dim() != model.config.embed_dim) {
    throw Error("embedding dimension " + std::to_string(table.dim()) + " does not match the checkpoint's " +
                std::to_string(model.config.embed_dim));
  }
  std::map<std::size_t, std::vector<NGramRecord>> probes;
  for (std::size_t n : required_probe_lengths(model.config))
    probes[n] = extract_ngrams(dataset, n, table, config.probe_split);
  return build_activation_matrix(model, table, probes, dataset.class_names, to_string(config.probe_split));
}

std::string ngram_text(const NGramRecord& r) {
  std::string s;
  for (const std::string& t : r.tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

std::string label_text(const NGramRecord& r, const std::vector<std::string>& classes) {
  std::string s;
  for (std::size_t l : r.labels) {
    if (!s.empty()) s += ',';
    s += classes.at(l);
  }
  return s;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.out);
  const Dataset dataset = load_run_dataset(config);
  const EmbeddingTable table = load_run_embeddings(config, dataset);
  Model model = build_model(effective_model_config(config, dataset, table), config.seed);

  TrainSummary summary;
  summary.history = train(model, dataset, table);
  if (dataset.count(Split::test) > 0) summary.test_accuracy = evaluate(model, dataset, table, Split::test);

  summary.checkpoint = config.out / "checkpoint.bin";
  save_checkpoint(model, summary.checkpoint);

  std::ostringstream metrics;
  metrics << "epoch,train_loss,test_accuracy\n";
  for (const EpochMetrics& e : summary.history) {
    metrics << e.epoch << ',' << format_double(e.train_loss) << ','
            << (e.test_accuracy ? format_double(*e.test_accuracy) : std::string("")) << '\n';
  }
  summary.metrics = config.out / "metrics.csv";
  write_file(summary.metrics, metrics.str());

  std::size_t in_vocab = 0, tokens = 0;
  for (const Sentence& s : dataset.sentences)
    for (const std::string& t : s.tokens) {
      ++tokens;
      if (table.contains(t)) ++in_vocab;
    }
  json manifest;
  manifest["dataset"] = {{"name", dataset.name},
                         {"classes", dataset.class_names},
                         {"train_size", dataset.count(Split::train)},
                         {"test_size", dataset.count(Split::test)}};
  manifest["embeddings"] = {{"source", config.embeddings.path ? "file" : "random"},
                            {"dim", table.dim()},
                            {"vocabulary", table.size()},
                            {"token_coverage", tokens ? static_cast<double>(in_vocab) / static_cast<double>(tokens) : 0.0}};
  if (!config.embeddings.path) manifest["embeddings"]["seed"] = config.embeddings.seed;
  manifest["model"] = model_config_to_json(model.config);
  manifest["seed"] = config.seed;
  manifest["epochs_completed"] = model.epoch;
  manifest["final_train_loss"] = summary.history.empty() ? 0.0 : summary.history.back().train_loss;
  manifest["test_accuracy"] = summary.test_accuracy ? json(*summary.test_accuracy) : json(nullptr);
  summary.manifest = config.out / "manifest.json";
  write_file(summary.manifest, manifest.dump(2) + "\n");
  return summary;
}

fs::path cmd_probe_export(const RunConfig& config, const fs::path& checkpoint) {
  config.validate();
  if (!fs::is_regular_file(checkpoint)) throw Error("checkpoint not found: " + checkpoint.string());
  const Model model = load_checkpoint(checkpoint);
  fs::create_directories(config.out);
  const ActivationMatrix matrix = probe_model(config, model);
  const fs::path path = config.out / "activations.tsv";
  std::ostringstream text;
  write_activation_matrix(matrix, text);
  write_file(path, text.str());
  return path;
}

AnalysisSummary analyze_activations(const ActivationMatrix& matrix, const RunConfig& config,
                                    const fs::path& out_dir) {
  config.validate(false);
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "correlations");
  AnalysisSummary s;

  std::vector<std::vector<KernelLabelReport>> reports;
  std::ostringstream top_text;
  Table labels_csv;
  labels_csv.header = {"kernel", "assigned", "rank", "ngram", "activation", "labels"};
  for (const ActivationGroup& g : matrix.groups) {
    reports.push_back(label_kernels(g, matrix.class_names));
    const std::size_t k = std::min(config.top_k, g.probes.size());
    for (std::size_t i = 0; i < g.kernels.size(); ++i) {
      const KernelLabelReport& rep = reports.back()[i];
      top_text << g.kernels[i].str() << "  [" << rep.assigned << "]\n";
      for (const TopNGram& t : top_ngrams_report(g, i, k)) {
        top_text << "  " << ngram_text(g.probes[t.probe]) << "\t" << format_double(t.activation) << "\t"
                 << label_text(g.probes[t.probe], matrix.class_names) << '\n';
      }
      for (std::size_t r = 0; r < rep.top.size(); ++r) {
        const NGramRecord& rec = g.probes[rep.top[r].probe];
        labels_csv.rows.push_back({g.kernels[i].str(), rep.assigned, std::to_string(r + 1), ngram_text(rec),
                                   format_double(rep.top[r].activation), label_text(rec, matrix.class_names)});
      }
    }
    s.correlations.push_back(correlation_matrix(g));
    std::ostringstream cm_text;
    write_correlation_matrix(s.correlations.back(), cm_text);
    write_file(out_dir / "correlations" / (group_file_name(g.name()) + ".txt"), cm_text.str());
  }
  s.class_counts = kernel_class_table(reports, matrix.class_names);
  const Table class_table = class_count_table(s.class_counts);
  write_file(out_dir / "class_table.txt", class_table.to_text());
  write_file(out_dir / "class_table.csv", class_table.to_csv());
  write_file(out_dir / "top_ngrams.txt", top_text.str());
  write_file(out_dir / "kernel_labels.csv", labels_csv.to_csv());

  for (const CorrelationMatrix& cm : s.correlations)
    s.pair_counts.push_back(count_correlated_pairs(cm, config.pair_thresholds));
  const Table pairs = correlated_pairs_table(s.correlations, config.pair_thresholds);
  write_file(out_dir / "pairs.txt", pairs.to_text());
  write_file(out_dir / "pairs.csv", pairs.to_csv());

  Table bridges_csv;
  bridges_csv.header = {"group", "i", "j", "bridge", "r_ij", "r_ik", "r_jk"};
  for (const CorrelationMatrix& cm : s.correlations) {
    s.bridges.push_back(find_bridges(cm, config.bridge_low, config.bridge_high));
    for (const Bridge& b : s.bridges.back()) {
      bridges_csv.rows.push_back({cm.name(), cm.kernels[b.i].str(), cm.kernels[b.j].str(), cm.kernels[b.k].str(),
                                  format_double(b.r_ij), format_double(b.r_ik), format_double(b.r_jk)});
    }
  }
  write_file(out_dir / "bridges.csv", bridges_csv.to_csv());
  s.bridge_counts = bridge_count_table(s.correlations, s.bridges);
  const Table bridge_counts = bridge_table(s.bridge_counts);
  write_file(out_dir / "bridge_counts.txt", bridge_counts.to_text());
  write_file(out_dir / "bridge_counts.csv", bridge_counts.to_csv());

  json summary;
  summary["probe_split"] = matrix.probe_split;
  summary["pair_thresholds"] = config.pair_thresholds;
  summary["bridge_thresholds"] = {{"low", config.bridge_low}, {"high", config.bridge_high}};
  json groups = json::array();
  std::map<int, std::vector<std::size_t>> pair_sums;
  for (std::size_t g = 0; g < matrix.groups.size(); ++g) {
    const CorrelationMatrix& cm = s.correlations[g];
    std::size_t degenerate = 0;
    for (bool d : cm.degenerate) degenerate += d ? 1 : 0;
    auto& sums = pair_sums[cm.layer];
    sums.resize(config.pair_thresholds.size(), 0);
    for (std::size_t t = 0; t < sums.size(); ++t) sums[t] += s.pair_counts[g][t];
    groups.push_back({{"group", cm.name()},
                      {"probes", matrix.groups[g].probes.size()},
                      {"degenerate_kernels", degenerate},
                      {"pairs", s.pair_counts[g]},
                      {"bridges", s.bridges[g].size()}});
  }
  summary["groups"] = groups;
  for (const auto& [layer, sums] : pair_sums) {
    summary["layers"]["L" + std::to_string(layer)] = {{"pairs", sums}, {"bridges", s.bridge_counts.layer_sum(layer)}};
  }
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  return s;
}

AnalysisSummary cmd_analyze(const RunConfig& config, const std::optional<fs::path>& checkpoint,
                            const std::optional<fs::path>& activations) {
  if (activations) {
    config.validate(false);
    std::ifstream in(*activations);
    if (!in) throw Error("cannot open activation matrix " + activations->string());
    return analyze_activations(read_activation_matrix(in), config, config.out);
  }
  if (!checkpoint) throw Error("analyze needs a checkpoint or an activation matrix");
  const fs::path exported = cmd_probe_export(config, *checkpoint);
  std::ifstream in(exported);
  return analyze_activations(read_activation_matrix(in), config, config.out);
}

fs::path cmd_plot(const fs::path& activations, const KernelId& first, const KernelId& second,
                  const fs::path& out_dir, std::size_t limit, std::size_t slices) {
  if (first.group() != second.group()) {
    throw Error("kernels " + first.str() + " and " + second.str() +
                " belong to different probe groups; activations are only comparable over a shared n-gram set");
  }
  std::ifstream in(activations);
  if (!in) throw Error("cannot open activation matrix " + activations.string());
  const ActivationMatrix matrix = read_activation_matrix(in);
  const ActivationGroup& g = matrix.group(first.layer, first.window);
  auto row_of = [&](const KernelId& id) {
    for (std::size_t i = 0; i < g.kernels.size(); ++i)
      if (g.kernels[i] == id) return i;
    throw Error("kernel " + id.str() + " not found in activation matrix");
  };
  const ActivationGraph graph = activation_graph(g.row(row_of(first)), g.row(row_of(second)), limit, slices);
  fs::create_directories(out_dir);
  const fs::path path =
      out_dir / ("activation_graph_" + group_file_name(first.str()) + "__" + group_file_name(second.str()) + ".svg");
  write_file(path, render_activation_graph_svg(graph, {first.str(), second.str()}));
  return path;
}

}  // namespace textcnn
