#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "textcnn/tensor.hpp"

namespace textcnn {

enum class Mode { train, infer };

// A bank of convolution kernels sharing one window. weights has shape
// {kernels, window, in_channels}; bias has shape {kernels}.
struct ConvParams {
  std::size_t window = 0;
  std::size_t in_channels = 0;
  Tensor weights;
  Tensor bias;

  ConvParams() = default;
  ConvParams(std::size_t window, std::size_t in_channels, std::size_t kernels);

  std::size_t kernels() const { return bias.size(); }
};

// Valid (unpadded) convolution over time: input T x C -> (T-h+1) x K.
Tensor conv_valid_forward(const Tensor& input, const ConvParams& params);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

ConvGrads conv_valid_backward(const Tensor& input, const ConvParams& params,
                              const Tensor& grad_out);

// Raw kernels used by the model to work on stacked batches without copies.
// `input` holds `steps` rows of params.in_channels values; `out` receives
// (steps - window + 1) rows of params.kernels() values.
void conv_forward_rows(std::span<const double> input, std::size_t steps,
                       const ConvParams& params, std::span<double> out);
// Accumulates into grad_weights/grad_bias and, when non-empty, grad_input.
void conv_backward_rows(std::span<const double> input, std::size_t steps,
                        const ConvParams& params, std::span<const double> grad_out,
                        std::span<double> grad_input, std::span<double> grad_weights,
                        std::span<double> grad_bias);

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  // Number of train-mode batches folded into the running statistics.
  std::uint64_t tracked_batches = 0;

  BatchNormParams() = default;
  explicit BatchNormParams(std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);

  std::size_t channels() const { return gamma.size(); }
  bool has_running_stats() const { return tracked_batches > 0; }
};

struct BatchNormOutput {
  Tensor output;
  // Per-channel statistics used for normalization (batch stats in train
  // mode, running stats in infer mode). Variance is the biased estimator.
  Tensor mean;
  Tensor var;
};

// Pure normalization; never touches running statistics.
BatchNormOutput batchnorm_apply(const Tensor& batch, const BatchNormParams& params, Mode mode);

// Exponential moving average with the params' momentum. The first batch sets
// the running statistics directly.
void update_running_stats(BatchNormParams& params, const Tensor& batch_mean,
                          const Tensor& batch_var);

// Normalizes and, in train mode, folds the batch statistics into the
// running statistics.
Tensor batchnorm_forward(const Tensor& batch, BatchNormParams& params, Mode mode);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm_backward(const Tensor& batch, const BatchNormParams& params,
                                  const Tensor& grad_out, Mode mode);

Tensor relu(const Tensor& x);
// Passes grad where x > 0; the subgradient at 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

struct MaxPoolResult {
  Tensor values;                 // {C}
  std::vector<std::size_t> rows;  // first maximal row per channel
};

MaxPoolResult maxpool_time(const Tensor& matrix);
Tensor maxpool_time_backward(const MaxPoolResult& pooled, std::size_t steps,
                             const Tensor& grad_out);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 1 for kept elements, 0 for dropped
};

// Inverted dropout: survivors are scaled by 1/keep so inference is identity.
DropoutResult dropout(const Tensor& x, double keep, std::uint64_t seed, Mode mode);
Tensor dropout_backward(const Tensor& mask, double keep, const Tensor& grad_out);

Tensor softmax(std::span<const double> logits);

struct DenseSoftmaxResult {
  double loss = 0.0;
  Tensor logits;
  Tensor probs;
  Tensor grad_features;
  Tensor grad_weights;
  Tensor grad_bias;
};

// Dense projection W (classes x F) plus bias, softmax, and cross-entropy
// against `label`.
DenseSoftmaxResult dense_softmax_xent(std::span<const double> features, const Tensor& weights,
                                      const Tensor& bias, std::size_t label);

}  // namespace textcnn
