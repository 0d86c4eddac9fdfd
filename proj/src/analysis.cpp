#include "textcnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "textcnn/error.hpp"

namespace textcnn {

std::string KernelId::group() const { return std::to_string(layer) + "-" + std::to_string(window); }

std::string KernelId::str() const { return group() + "/#" + std::to_string(index); }

KernelId KernelId::parse(std::string_view text) {
  // <layer>-<window>/#<index>
  const auto bad = [&] { return Error("bad kernel id '" + std::string(text) + "' (expected e.g. 1-3/#48)"); };
  const std::size_t dash = text.find('-');
  const std::size_t slash = text.find("/#");
  if (dash == std::string_view::npos || slash == std::string_view::npos || slash < dash) throw bad();
  KernelId id;
  try {
    std::size_t used = 0;
    const std::string layer(text.substr(0, dash));
    const std::string window(text.substr(dash + 1, slash - dash - 1));
    const std::string index(text.substr(slash + 2));
    id.layer = std::stoi(layer, &used);
    if (used != layer.size()) throw bad();
    id.window = std::stoul(window, &used);
    if (used != window.size()) throw bad();
    id.index = std::stoul(index, &used);
    if (used != index.size()) throw bad();
  } catch (const std::logic_error&) {
    throw bad();
  }
  if (id.layer != 1 && id.layer != 2) throw bad();
  return id;
}

std::size_t probe_length(int layer, std::size_t window) {
  return layer == 1 ? window : 2 * window - 1;
}

namespace {

const Tower& find_tower(const Model& model, std::size_t window) {
  for (const Tower& t : model.towers)
    if (t.window == window) return t;
  throw Error("model has no tower with window " + std::to_string(window));
}

}  // namespace

std::vector<double> probe_group(const Model& model, int layer, std::size_t window,
                                const Tensor& ngram) {
  if (layer != 1 && layer != 2) throw Error("layer must be 1 or 2");
  const Tower& tw = find_tower(model, window);
  const std::size_t n = probe_length(layer, window);
  if (ngram.rank() != 2 || ngram.rows() != n) {
    throw ShapeError("layer-" + std::to_string(layer) + " kernels of window " + std::to_string(window) +
                     " take " + std::to_string(n) + "-grams, got " + std::to_string(ngram.rows()) +
                     " rows");
  }
  if (ngram.cols() != model.config.embed_dim) throw ShapeError("n-gram embedding width mismatch");
  Tensor act = relu(batchnorm_apply(conv_valid_forward(ngram, tw.conv1), tw.bn1, Mode::infer).output);
  if (layer == 2) {
    act = relu(batchnorm_apply(conv_valid_forward(act, tw.conv2), tw.bn2, Mode::infer).output);
  }
  return std::vector<double>(act.values().begin(), act.values().end());
}

double probe_kernel(const Model& model, const KernelId& kernel, const Tensor& ngram) {
  if (kernel.index >= model.config.feature_maps) throw Error("kernel index out of range: " + kernel.str());
  return probe_group(model, kernel.layer, kernel.window, ngram)[kernel.index];
}

std::string ActivationGroup::name() const {
  return std::to_string(layer) + "-" + std::to_string(window);
}

const ActivationGroup& ActivationMatrix::group(int layer, std::size_t window) const {
  for (const ActivationGroup& g : groups)
    if (g.layer == layer && g.window == window) return g;
  throw Error("no activation group " + std::to_string(layer) + "-" + std::to_string(window));
}

std::size_t ActivationMatrix::total_kernels() const {
  std::size_t n = 0;
  for (const ActivationGroup& g : groups) n += g.kernels.size();
  return n;
}

std::vector<std::size_t> required_probe_lengths(const ModelConfig& config) {
  std::vector<std::size_t> lengths;
  for (std::size_t h : config.windows) {
    lengths.push_back(probe_length(1, h));
    lengths.push_back(probe_length(2, h));
  }
  std::sort(lengths.begin(), lengths.end());
  lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
  return lengths;
}

ActivationMatrix build_activation_matrix(const Model& model, const EmbeddingTable& table,
                                         const std::map<std::size_t, std::vector<NGramRecord>>& probe_sets,
                                         std::vector<std::string> class_names,
                                         std::string probe_split) {
  ActivationMatrix m;
  m.class_names = std::move(class_names);
  m.probe_split = std::move(probe_split);
  const std::size_t k = model.config.feature_maps;
  for (int layer : {1, 2}) {
    for (const Tower& tw : model.towers) {
      ActivationGroup g;
      g.layer = layer;
      g.window = tw.window;
      const std::size_t n = g.ngram_length();
      auto it = probe_sets.find(n);
      if (it == probe_sets.end() || it->second.empty()) {
        throw Error("probe group " + g.name() + " is empty (no " + std::to_string(n) + "-grams)");
      }
      for (std::size_t i = 0; i < k; ++i) g.kernels.push_back({layer, tw.window, i});
      g.probes = it->second;
      g.values = Tensor({k, g.probes.size()});
      for (std::size_t p = 0; p < g.probes.size(); ++p) {
        const std::vector<double> acts = probe_group(model, layer, tw.window, embed_ngram(g.probes[p], table));
        for (std::size_t i = 0; i < k; ++i) g.values(i, p) = acts[i];
      }
      m.groups.push_back(std::move(g));
    }
  }
  return m;
}

std::vector<TopNGram> top_ngrams_report(const ActivationGroup& group, std::size_t kernel,
                                        std::size_t k) {
  if (k == 0) throw Error("top-k report needs k >= 1");
  if (kernel >= group.kernels.size()) throw Error("kernel row out of range");
  const std::span<const double> row = group.row(kernel);
  if (k > row.size()) {
    throw Error("requested top-" + std::to_string(k) + " but group " + group.name() + " has only " +
                std::to_string(row.size()) + " probes");
  }
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
  std::vector<TopNGram> top;
  for (std::size_t i = 0; i < k; ++i) top.push_back({order[i], row[order[i]]});
  return top;
}

std::vector<KernelLabelReport> label_kernels(const ActivationGroup& group,
                                             const std::vector<std::string>& class_names) {
  if (group.probes.size() < 3) {
    throw Error("labeling group " + group.name() + " needs at least 3 probes, has " +
                std::to_string(group.probes.size()));
  }
  std::vector<KernelLabelReport> reports;
  for (std::size_t i = 0; i < group.kernels.size(); ++i) {
    KernelLabelReport r;
    r.kernel = group.kernels[i];
    r.top = top_ngrams_report(group, i, 3);
    std::vector<std::size_t> labels;
    for (const TopNGram& t : r.top) {
      const auto& l = group.probes[t.probe].labels;
      labels.insert(labels.end(), l.begin(), l.end());
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.size() == 1) {
      r.label = labels.front();
      r.assigned = class_names.at(labels.front());
    } else {
      r.assigned = std::string(kOtherLabel);
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

std::size_t CountTable::column_sum(std::size_t group) const {
  std::size_t s = 0;
  for (const auto& row : counts) s += row.at(group);
  return s;
}

std::size_t CountTable::layer_sum(std::size_t row, int layer) const {
  std::size_t s = 0;
  for (std::size_t g = 0; g < group_names.size(); ++g)
    if (group_names[g].starts_with(std::to_string(layer) + "-")) s += counts.at(row).at(g);
  return s;
}

CountTable kernel_class_table(std::span<const std::vector<KernelLabelReport>> reports,
                              const std::vector<std::string>& class_names) {
  CountTable t;
  t.row_names = class_names;
  t.row_names.emplace_back("Other");
  t.counts.assign(t.row_names.size(), std::vector<std::size_t>(reports.size(), 0));
  for (std::size_t g = 0; g < reports.size(); ++g) {
    t.group_names.push_back(reports[g].empty() ? std::string("?") : reports[g].front().kernel.group());
    for (const KernelLabelReport& r : reports[g]) {
      const std::size_t row = r.label ? *r.label : class_names.size();
      t.counts.at(row)[g] += 1;
    }
  }
  return t;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: vectors differ in length");
  if (x.size() < 2) throw Error("pearson: need at least 2 observations");
  // Streaming co-moments (Welford); constant input leaves its moment at exactly 0.
  double mean_x = 0.0, mean_y = 0.0, cxx = 0.0, cyy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    mean_x += dx / n;
    mean_y += dy / n;
    cxx += dx * (x[i] - mean_x);
    cyy += dy * (y[i] - mean_y);
    cxy += dx * (y[i] - mean_y);
  }
  if (cxx <= 0.0 || cyy <= 0.0) return {0.0, true};
  const double r = cxy / (std::sqrt(cxx) * std::sqrt(cyy));
  return {std::clamp(r, -1.0, 1.0), false};
}

std::string CorrelationMatrix::name() const {
  return std::to_string(layer) + "-" + std::to_string(window);
}

CorrelationMatrix correlation_matrix(const ActivationGroup& group) {
  const std::size_t k = group.kernels.size();
  const std::size_t n = group.values.cols();
  if (k < 2) throw Error("correlation needs at least 2 kernels in group " + group.name());
  if (n < 2) throw Error("correlation needs at least 2 probes in group " + group.name());
  CorrelationMatrix cm;
  cm.layer = group.layer;
  cm.window = group.window;
  cm.kernels = group.kernels;
  cm.r = Tensor({k, k});
  cm.degenerate.assign(k, false);

  // Center and normalize every row once; r is then a dot product.
  Tensor unit({k, n});
  for (std::size_t i = 0; i < k; ++i) {
    const std::span<const double> row = group.row(i);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    if (*lo == *hi) {
      cm.degenerate[i] = true;
      continue;
    }
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      unit(i, p) = row[p] - mean;
      ss += unit(i, p) * unit(i, p);
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t p = 0; p < n; ++p) unit(i, p) *= inv;
  }
  for (std::size_t i = 0; i < k; ++i) {
    cm.r(i, i) = 1.0;
    if (cm.degenerate[i]) continue;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (cm.degenerate[j]) continue;
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += unit(i, p) * unit(j, p);
      s = std::clamp(s, -1.0, 1.0);
      cm.r(i, j) = s;
      cm.r(j, i) = s;
    }
  }
  return cm;
}

CorrelationMatrix correlation_matrix_from(Tensor r, int layer, std::size_t window) {
  if (r.rank() != 2 || r.rows() != r.cols()) throw ShapeError("correlation matrix must be square");
  CorrelationMatrix cm;
  cm.layer = layer;
  cm.window = window;
  for (std::size_t i = 0; i < r.rows(); ++i) cm.kernels.push_back({layer, window, i});
  cm.degenerate.assign(r.rows(), false);
  cm.r = std::move(r);
  return cm;
}

std::vector<std::size_t> count_correlated_pairs(const CorrelationMatrix& cm,
                                                std::span<const double> thresholds) {
  std::vector<std::size_t> counts(thresholds.size(), 0);
  const std::size_t k = cm.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (!cm.usable(i)) continue;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (!cm.usable(j)) continue;
      const double a = std::abs(cm.r(i, j));
      for (std::size_t t = 0; t < thresholds.size(); ++t)
        if (a > thresholds[t]) ++counts[t];
    }
  }
  return counts;
}

ActivationGraph activation_graph(std::span<const double> x, std::span<const double> y,
                                 std::size_t limit, std::size_t slices) {
  if (x.size() != y.size()) throw ShapeError("activation graph: rows differ in length");
  slices = std::max<std::size_t>(slices, 1);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  const std::size_t kept = std::min(limit, order.size());
  order.resize(kept);

  ActivationGraph g;
  const std::size_t base = kept / slices;
  const std::size_t extra = kept % slices;
  std::size_t start = 0;
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    g.slice_starts.push_back(start);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + len),
                     [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
    start += len;
  }
  for (std::size_t idx : order) {
    g.first.push_back(x[idx]);
    g.second.push_back(y[idx]);
  }
  if (x.size() >= 2) g.r = pearson(x, y).r;
  return g;
}

std::vector<Bridge> find_bridges(const CorrelationMatrix& cm, double low, double high) {
  if (!(low > 0.0 && low < high && high < 1.0)) throw Error("bridge thresholds must satisfy 0 < low < high < 1");
  std::vector<Bridge> out;
  const std::size_t k = cm.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (!cm.usable(i)) continue;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (!cm.usable(j) || !(std::abs(cm.r(i, j)) < low)) continue;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == i || b == j || !cm.usable(b)) continue;
        if (std::abs(cm.r(i, b)) > high && std::abs(cm.r(j, b)) > high)
          out.push_back({i, j, b, cm.r(i, j), cm.r(i, b), cm.r(j, b)});
      }
    }
  }
  return out;
}

std::size_t BridgeTable::layer_sum(int layer) const {
  const auto& row = counts.at(static_cast<std::size_t>(layer - 1));
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

BridgeTable bridge_count_table(std::span<const CorrelationMatrix> groups,
                               std::span<const std::vector<Bridge>> bridges) {
  if (groups.size() != bridges.size()) throw ShapeError("bridge table: one bridge list per group expected");
  BridgeTable t;
  for (const CorrelationMatrix& g : groups) t.windows.push_back(g.window);
  std::sort(t.windows.begin(), t.windows.end());
  t.windows.erase(std::unique(t.windows.begin(), t.windows.end()), t.windows.end());
  t.counts.assign(2, std::vector<std::size_t>(t.windows.size(), 0));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t w = static_cast<std::size_t>(
        std::find(t.windows.begin(), t.windows.end(), groups[g].window) - t.windows.begin());
    t.counts.at(static_cast<std::size_t>(groups[g].layer - 1))[w] += bridges[g].size();
  }
  return t;
}

}  // namespace textcnn
