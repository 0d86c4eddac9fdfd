#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace textcnn {

using ScalarFunction = std::function<double(std::span<const double>)>;

std::vector<double> numeric_gradient(const ScalarFunction& f, std::span<const double> x,
                                     double eps);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

// Compares `analytic` against central differences of f at x. The relative
// error of each coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> x,
                           std::span<const double> analytic, double eps);

}  // namespace textcnn
