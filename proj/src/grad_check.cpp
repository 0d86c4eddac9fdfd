#include "textcnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "textcnn/error.hpp"

namespace textcnn {

std::vector<double> numeric_gradient(const ScalarFunction& f, std::span<const double> x,
                                     double eps) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double up = f(point);
    point[i] = saved - eps;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error("grad_check: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> x,
                           std::span<const double> analytic, double eps) {
  if (analytic.size() != x.size()) throw ShapeError("grad_check: gradient length mismatch");
  const std::vector<double> numeric = numeric_gradient(f, x, eps);
  GradCheckResult r;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    const double err = std::abs(analytic[i] - numeric[i]) / denom;
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace textcnn
