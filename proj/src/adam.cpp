#include "textcnn/adam.hpp"

#include <cmath>

#include "textcnn/error.hpp"

namespace textcnn {

AdamState AdamState::for_param(const Tensor& param, const AdamConfig& config) {
  AdamState s;
  s.m = Tensor(param.shape());
  s.v = Tensor(param.shape());
  s.lr = config.lr;
  s.beta1 = config.beta1;
  s.beta2 = config.beta2;
  s.eps = config.eps;
  return s;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  if (!param.same_shape(grad)) throw ShapeError("adam: gradient shape does not match parameter");
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw ShapeError("adam: state shape does not match parameter");
  }
  if (!grad.all_finite()) throw Error("adam: non-finite gradient");

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    param[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace textcnn
