#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "textcnn/rng.hpp"
#include "textcnn/tensor.hpp"
#include "textcnn/text_data.hpp"

namespace textcnn::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Sum of out * weights, the scalar used to drive backward passes in gradient checks.
inline double weighted_sum(const Tensor& out, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

// Two-class corpus where a marker token decides the label. Every sentence
// is filler words plus exactly one marker at a random position.
Dataset marker_corpus(std::size_t train, std::size_t test, std::uint64_t seed);

// Six-class question corpus in TREC coarse classes. Each class has its own
// opening phrase and topic words, mixed with shared filler.
Dataset synthetic_trec(std::size_t train, std::size_t test, std::uint64_t seed);

// Writes the sentences of one split in TREC line format.
void write_split(const Dataset& dataset, Split split, const std::filesystem::path& path);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

}  // namespace textcnn::testing
