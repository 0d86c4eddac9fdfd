#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "textcnn/model.hpp"
#include "textcnn/text_data.hpp"

namespace textcnn {

// A convolution kernel addressed as "<layer>-<window>/#<index>", e.g. 1-3/#48.
struct KernelId {
  int layer = 1;
  std::size_t window = 3;
  std::size_t index = 0;

  std::string str() const;
  std::string group() const;  // "<layer>-<window>"
  static KernelId parse(std::string_view text);

  friend auto operator<=>(const KernelId&, const KernelId&) = default;
};

// Length of the n-grams a kernel is probed with: h for layer 1, 2h-1 for layer 2.
std::size_t probe_length(int layer, std::size_t window);

// Post-bn-relu response of every kernel of one (layer, tower) to an n-gram.
// Batch norm always uses running statistics.
std::vector<double> probe_group(const Model& model, int layer, std::size_t window,
                                const Tensor& ngram);
double probe_kernel(const Model& model, const KernelId& kernel, const Tensor& ngram);

// Activations of all kernels of one (layer, window) group over that group's
// probe set. values is kernels x probes.
struct ActivationGroup {
  int layer = 1;
  std::size_t window = 3;
  std::vector<KernelId> kernels;
  std::vector<NGramRecord> probes;
  Tensor values;

  std::string name() const;
  std::size_t ngram_length() const { return probe_length(layer, window); }
  std::span<const double> row(std::size_t kernel) const { return values.row(kernel); }
};

struct ActivationMatrix {
  std::vector<std::string> class_names;
  std::string probe_split = "all";
  std::vector<ActivationGroup> groups;  // layer-major, then ascending window

  const ActivationGroup& group(int layer, std::size_t window) const;
  std::size_t total_kernels() const;
};

// probe_sets maps n-gram length to its records; every length required by the
// model (h and 2h-1 for each window) must be present and nonempty.
ActivationMatrix build_activation_matrix(const Model& model, const EmbeddingTable& table,
                                         const std::map<std::size_t, std::vector<NGramRecord>>& probe_sets,
                                         std::vector<std::string> class_names,
                                         std::string probe_split = "all");

// The n-gram lengths the model needs probe sets for, ascending.
std::vector<std::size_t> required_probe_lengths(const ModelConfig& config);

struct TopNGram {
  std::size_t probe = 0;  // column in the group
  double activation = 0.0;
};

// k highest activations, descending; ties go to the lower probe id.
std::vector<TopNGram> top_ngrams_report(const ActivationGroup& group, std::size_t kernel,
                                        std::size_t k);

inline constexpr std::string_view kOtherLabel = "other";

struct KernelLabelReport {
  KernelId kernel;
  std::optional<std::size_t> label;  // empty means "other"
  std::string assigned;
  std::vector<TopNGram> top;
};

// A kernel takes a class when the union of its top-3 n-grams' label sets is
// exactly that class; otherwise it is "other".
std::vector<KernelLabelReport> label_kernels(const ActivationGroup& group,
                                             const std::vector<std::string>& class_names);

struct CountTable {
  std::vector<std::string> row_names;
  std::vector<std::string> group_names;      // e.g. "1-3"
  std::vector<std::vector<std::size_t>> counts;  // [row][group]

  std::size_t column_sum(std::size_t group) const;
  // Sum of a row over groups belonging to `layer`.
  std::size_t layer_sum(std::size_t row, int layer) const;
};

// Rows: every class then "Other"; columns: one per (layer, window) group.
CountTable kernel_class_table(std::span<const std::vector<KernelLabelReport>> reports,
                              const std::vector<std::string>& class_names);

struct Correlation {
  double r = 0.0;
  bool degenerate = false;  // one input had zero variance; r is reported as 0
};

Correlation pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationMatrix {
  int layer = 1;
  std::size_t window = 3;
  std::vector<KernelId> kernels;
  Tensor r;                       // K x K, symmetric, unit diagonal
  std::vector<bool> degenerate;  // kernel's activation row is constant

  std::size_t size() const { return kernels.size(); }
  std::string name() const;
  bool usable(std::size_t i) const { return !degenerate[i]; }
};

CorrelationMatrix correlation_matrix(const ActivationGroup& group);
// Builds a matrix from explicit coefficients (used for synthetic checks).
CorrelationMatrix correlation_matrix_from(Tensor r, int layer = 1, std::size_t window = 3);

// Unordered pairs i < j of usable kernels with |r| > threshold, per threshold.
std::vector<std::size_t> count_correlated_pairs(const CorrelationMatrix& cm,
                                                std::span<const double> thresholds);

struct ActivationGraph {
  std::vector<double> first;   // kernel i's activations
  std::vector<double> second;  // kernel j's activations
  std::vector<std::size_t> slice_starts;
  double r = 0.0;
};

// Pairs sorted by the first value (descending), truncated to `limit`, split
// into `slices` contiguous near-equal slices, each re-sorted by the second
// value (descending).
ActivationGraph activation_graph(std::span<const double> x, std::span<const double> y,
                                 std::size_t limit = 1200, std::size_t slices = 3);

struct Bridge {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  double r_ij = 0.0;
  double r_ik = 0.0;
  double r_jk = 0.0;

  friend bool operator==(const Bridge&, const Bridge&) = default;
};

// Every (i < j, k not in {i, j}) with |r_ij| < low, |r_ik| > high and
// |r_jk| > high among usable kernels, ordered by (i, j, k).
std::vector<Bridge> find_bridges(const CorrelationMatrix& cm, double low = 0.1, double high = 0.4);

// Rows L1, L2; columns per window.
struct BridgeTable {
  std::vector<std::size_t> windows;
  std::vector<std::vector<std::size_t>> counts;  // [layer-1][window index]

  std::size_t layer_sum(int layer) const;
};

BridgeTable bridge_count_table(std::span<const CorrelationMatrix> groups,
                               std::span<const std::vector<Bridge>> bridges);

// Columnar text export. See activation_io.cpp for the layout.
void write_activation_matrix(const ActivationMatrix& matrix, std::ostream& out);
ActivationMatrix read_activation_matrix(std::istream& in);

void write_correlation_matrix(const CorrelationMatrix& cm, std::ostream& out);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace textcnn
