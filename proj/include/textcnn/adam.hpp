#pragma once

#include <cstdint>

#include "textcnn/tensor.hpp"

namespace textcnn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_param(const Tensor& param, const AdamConfig& config = {});
};

// One bias-corrected Adam update. Throws before touching anything if the
// gradient has a non-finite entry.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

}  // namespace textcnn
