#include "textcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "textcnn/error.hpp"
#include "textcnn/rng.hpp"

namespace textcnn {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be a matrix");
}

}  // namespace

ConvParams::ConvParams(std::size_t window_, std::size_t in_channels_, std::size_t kernels)
    : window(window_),
      in_channels(in_channels_),
      weights({kernels, window_, in_channels_}),
      bias({kernels}) {}

void conv_forward_rows(std::span<const double> input, std::size_t steps, const ConvParams& params,
                       std::span<double> out) {
  const std::size_t h = params.window;
  const std::size_t c = params.in_channels;
  const std::size_t k = params.kernels();
  const std::size_t span = h * c;
  const std::size_t positions = steps - h + 1;
  const double* w = params.weights.data();
  const double* b = params.bias.data();
  // A window of h consecutive rows is contiguous in row-major storage.
  for (std::size_t p = 0; p < positions; ++p) {
    const double* slice = input.data() + p * c;
    double* o = out.data() + p * k;
    for (std::size_t j = 0; j < k; ++j) o[j] = b[j] + dot(w + j * span, slice, span);
  }
}

void conv_backward_rows(std::span<const double> input, std::size_t steps, const ConvParams& params,
                        std::span<const double> grad_out, std::span<double> grad_input,
                        std::span<double> grad_weights, std::span<double> grad_bias) {
  const std::size_t h = params.window;
  const std::size_t c = params.in_channels;
  const std::size_t k = params.kernels();
  const std::size_t span = h * c;
  const std::size_t positions = steps - h + 1;
  const double* w = params.weights.data();
  for (std::size_t p = 0; p < positions; ++p) {
    const double* slice = input.data() + p * c;
    const double* g = grad_out.data() + p * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double gj = g[j];
      if (gj == 0.0) continue;
      grad_bias[j] += gj;
      axpy(gj, slice, grad_weights.data() + j * span, span);
      if (!grad_input.empty()) axpy(gj, w + j * span, grad_input.data() + p * c, span);
    }
  }
}

namespace {

void check_conv_input(const Tensor& input, const ConvParams& params) {
  if (input.rank() != 2 && input.rank() != 1) throw ShapeError("conv input must be T x C");
  if (input.cols() != params.in_channels) {
    throw ShapeError("conv input has " + std::to_string(input.cols()) + " channels, kernel expects " +
                     std::to_string(params.in_channels));
  }
  if (params.weights.size() != params.kernels() * params.window * params.in_channels) {
    throw ShapeError("conv weights do not match window x channels");
  }
  if (input.rows() < params.window) throw ShapeError("input shorter than window");
}

}  // namespace

Tensor conv_valid_forward(const Tensor& input, const ConvParams& params) {
  check_conv_input(input, params);
  const std::size_t steps = input.rows();
  Tensor out({steps - params.window + 1, params.kernels()});
  conv_forward_rows(input.values(), steps, params, out.values());
  return out;
}

ConvGrads conv_valid_backward(const Tensor& input, const ConvParams& params,
                              const Tensor& grad_out) {
  check_conv_input(input, params);
  const std::size_t steps = input.rows();
  const std::size_t positions = steps - params.window + 1;
  if (grad_out.size() != positions * params.kernels()) {
    throw ShapeError("conv grad_out must have " + std::to_string(positions) + " x " +
                     std::to_string(params.kernels()) + " entries");
  }
  ConvGrads g{Tensor(input.shape()), Tensor(params.weights.shape()), Tensor(params.bias.shape())};
  conv_backward_rows(input.values(), steps, params, grad_out.values(), g.input.values(),
                     g.weights.values(), g.bias.values());
  return g;
}

BatchNormParams::BatchNormParams(std::size_t channels, double momentum_, double epsilon_)
    : gamma({channels}, 1.0),
      beta({channels}, 0.0),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      momentum(momentum_),
      epsilon(epsilon_) {}

namespace {

void check_bn(const Tensor& batch, const BatchNormParams& params) {
  require_matrix(batch, "batch norm input");
  if (batch.rows() == 0) throw ShapeError("batch norm needs at least one row");
  if (batch.cols() != params.channels()) throw ShapeError("batch norm channel count mismatch");
}

}  // namespace

BatchNormOutput batchnorm_apply(const Tensor& batch, const BatchNormParams& params, Mode mode) {
  check_bn(batch, params);
  const std::size_t n = batch.rows();
  const std::size_t c = batch.cols();
  BatchNormOutput r{Tensor(batch.shape()), Tensor({c}), Tensor({c})};
  if (mode == Mode::train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) r.mean[j] += batch(i, j);
    for (std::size_t j = 0; j < c; ++j) r.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = batch(i, j) - r.mean[j];
        r.var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) r.var[j] /= static_cast<double>(n);
  } else {
    if (!params.has_running_stats()) throw Error("batch norm running statistics are not populated");
    r.mean = params.running_mean;
    r.var = params.running_var;
  }
  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(r.var[j] + params.epsilon);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      r.output(i, j) = params.gamma[j] * (batch(i, j) - r.mean[j]) * inv_std[j] + params.beta[j];
  return r;
}

void update_running_stats(BatchNormParams& params, const Tensor& batch_mean,
                          const Tensor& batch_var) {
  // The first batch replaces the placeholder values instead of being blended
  // with them.
  const double m = params.tracked_batches == 0 ? 1.0 : params.momentum;
  for (std::size_t j = 0; j < params.channels(); ++j) {
    params.running_mean[j] = (1.0 - m) * params.running_mean[j] + m * batch_mean[j];
    params.running_var[j] = (1.0 - m) * params.running_var[j] + m * batch_var[j];
  }
  ++params.tracked_batches;
}

Tensor batchnorm_forward(const Tensor& batch, BatchNormParams& params, Mode mode) {
  BatchNormOutput r = batchnorm_apply(batch, params, mode);
  if (mode == Mode::train) update_running_stats(params, r.mean, r.var);
  return std::move(r.output);
}

BatchNormGrads batchnorm_backward(const Tensor& batch, const BatchNormParams& params,
                                  const Tensor& grad_out, Mode mode) {
  check_bn(batch, params);
  if (!grad_out.same_shape(batch)) throw ShapeError("batch norm grad_out shape mismatch");
  const BatchNormOutput fwd = batchnorm_apply(batch, params, mode);
  const std::size_t n = batch.rows();
  const std::size_t c = batch.cols();
  BatchNormGrads g{Tensor(batch.shape()), Tensor({c}), Tensor({c})};

  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(fwd.var[j] + params.epsilon);

  // sum_dxhat and sum_dxhat_xhat drive the mean/variance terms in train mode.
  std::vector<double> sum_dxhat(c, 0.0);
  std::vector<double> sum_dxhat_xhat(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double xhat = (batch(i, j) - fwd.mean[j]) * inv_std[j];
      const double go = grad_out(i, j);
      g.beta[j] += go;
      g.gamma[j] += go * xhat;
      const double dxhat = go * params.gamma[j];
      sum_dxhat[j] += dxhat;
      sum_dxhat_xhat[j] += dxhat * xhat;
    }

  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double dxhat = grad_out(i, j) * params.gamma[j];
      if (mode == Mode::infer) {
        g.input(i, j) = dxhat * inv_std[j];
      } else {
        const double xhat = (batch(i, j) - fwd.mean[j]) * inv_std[j];
        g.input(i, j) = inv_std[j] / nn * (nn * dxhat - sum_dxhat[j] - xhat * sum_dxhat_xhat[j]);
      }
    }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  if (x.size() != grad_out.size()) throw ShapeError("relu grad_out shape mismatch");
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

MaxPoolResult maxpool_time(const Tensor& matrix) {
  if (matrix.rank() != 2 && matrix.rank() != 1) throw ShapeError("max-pool input must be T x C");
  if (matrix.rows() == 0) throw ShapeError("max-pool needs at least one row");
  const std::size_t c = matrix.cols();
  MaxPoolResult r{Tensor({c}), std::vector<std::size_t>(c, 0)};
  for (std::size_t j = 0; j < c; ++j) r.values[j] = matrix(0, j);
  for (std::size_t t = 1; t < matrix.rows(); ++t)
    for (std::size_t j = 0; j < c; ++j)
      if (matrix(t, j) > r.values[j]) {
        r.values[j] = matrix(t, j);
        r.rows[j] = t;
      }
  return r;
}

Tensor maxpool_time_backward(const MaxPoolResult& pooled, std::size_t steps,
                             const Tensor& grad_out) {
  const std::size_t c = pooled.rows.size();
  if (grad_out.size() != c) throw ShapeError("max-pool grad_out length mismatch");
  Tensor g({steps, c});
  for (std::size_t j = 0; j < c; ++j) g(pooled.rows[j], j) = grad_out[j];
  return g;
}

DropoutResult dropout(const Tensor& x, double keep, std::uint64_t seed, Mode mode) {
  if (!(keep > 0.0 && keep <= 1.0)) throw Error("dropout keep rate must be in (0, 1]");
  DropoutResult r{x, Tensor(x.shape(), 1.0)};
  if (mode == Mode::infer || keep == 1.0) return r;
  Rng rng(seed);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (rng.uniform() < keep) {
      r.output[i] = x[i] / keep;
    } else {
      r.mask[i] = 0.0;
      r.output[i] = 0.0;
    }
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, double keep, const Tensor& grad_out) {
  if (mask.size() != grad_out.size()) throw ShapeError("dropout grad_out shape mismatch");
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] != 0.0 ? grad_out[i] / keep : 0.0;
  return g;
}

Tensor softmax(std::span<const double> logits) {
  Tensor p({logits.size()});
  if (logits.empty()) return p;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (double& v : p.values()) v /= sum;
  return p;
}

DenseSoftmaxResult dense_softmax_xent(std::span<const double> features, const Tensor& weights,
                                      const Tensor& bias, std::size_t label) {
  require_matrix(weights, "dense weights");
  const std::size_t classes = weights.rows();
  const std::size_t f = weights.cols();
  if (features.size() != f) throw ShapeError("dense features length mismatch");
  if (bias.size() != classes) throw ShapeError("dense bias length mismatch");
  if (label >= classes) {
    throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(classes) +
                " classes");
  }
  DenseSoftmaxResult r;
  r.logits = Tensor({classes});
  for (std::size_t c = 0; c < classes; ++c)
    r.logits[c] = bias[c] + dot(weights.data() + c * f, features.data(), f);
  r.probs = softmax(r.logits.values());

  // log-sum-exp form keeps the loss finite when probs[label] underflows.
  const double top = *std::max_element(r.logits.values().begin(), r.logits.values().end());
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) sum += std::exp(r.logits[c] - top);
  r.loss = top + std::log(sum) - r.logits[label];

  r.grad_bias = r.probs;
  r.grad_bias[label] -= 1.0;
  r.grad_weights = Tensor({classes, f});
  r.grad_features = Tensor({f});
  for (std::size_t c = 0; c < classes; ++c) {
    const double d = r.grad_bias[c];
    axpy(d, features.data(), r.grad_weights.data() + c * f, f);
    axpy(d, weights.data() + c * f, r.grad_features.data(), f);
  }
  return r;
}

}  // namespace textcnn
