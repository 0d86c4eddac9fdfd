#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textcnn/adam.hpp"
#include "textcnn/layers.hpp"
#include "textcnn/text_data.hpp"

namespace textcnn {

struct ModelConfig {
  std::vector<std::size_t> windows{3, 4, 5};
  std::size_t feature_maps = 64;
  std::size_t conv_layers_per_tower = 2;
  std::size_t embed_dim = 300;
  std::size_t num_classes = 6;
  double dropout_keep = 0.5;
  std::size_t batch_size = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  AdamConfig adam;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const;
  // Shortest input for which every tower yields a second-layer output.
  std::size_t min_length() const;
  // Width of the concatenated max-pooled feature vector.
  std::size_t feature_width() const { return feature_maps * windows.size(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One filter window: conv -> bn -> relu -> conv -> bn -> relu.
struct Tower {
  std::size_t window = 0;
  ConvParams conv1;
  BatchNormParams bn1;
  ConvParams conv2;
  BatchNormParams bn2;
};

struct Model {
  ModelConfig config;
  std::vector<Tower> towers;
  Tensor head_weights;  // {classes, feature_width}
  Tensor head_bias;     // {classes}
  std::size_t epoch = 0;
};

// Glorot-uniform weights, zero biases, identity batch norm.
Model build_model(const ModelConfig& config, std::uint64_t seed);

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// Trainable tensors in a fixed order (per tower: conv1 weights/bias, bn1
// gamma/beta, conv2 weights/bias, bn2 gamma/beta; then the head).
std::vector<NamedTensor> trainable_parameters(Model& model);
// Trainable tensors plus batch-norm running statistics.
std::vector<NamedTensor> all_tensors(Model& model);

// Embeds a sentence for the network: OOV tokens become zero rows and the
// result is right-padded with zero rows to `min_length`.
Tensor embed_sentence(std::span<const std::string> tokens, const EmbeddingTable& table,
                      std::size_t min_length);

struct TowerActivations {
  std::size_t window = 0;
  Tensor layer1;  // post bn1-relu, (T-h+1) x K
  Tensor layer2;  // post bn2-relu, (T-2h+2) x K
};

struct ForwardResult {
  Tensor logits;
  Tensor probs;
  Tensor features;  // concatenated max-pool output before dropout
  std::vector<TowerActivations> towers;
};

// Single-sentence pass. In train mode the sentence's own positions form the
// batch-norm batch and dropout uses `dropout_seed`.
ForwardResult forward(const Model& model, const Tensor& embedded, Mode mode,
                      std::uint64_t dropout_seed = 0);
ForwardResult forward(const Model& model, std::span<const std::string> tokens,
                      const EmbeddingTable& table, Mode mode, std::uint64_t dropout_seed = 0);

struct TowerBatchStats {
  Tensor bn1_mean, bn1_var, bn2_mean, bn2_var;
};

struct BatchResult {
  double loss = 0.0;  // mean cross-entropy (0 when no labels are given)
  std::vector<Tensor> probs;
  std::vector<TowerBatchStats> stats;  // filled in train mode
  std::vector<Tensor> gradients;       // aligned with trainable_parameters()
};

// Runs a mini-batch. Batch-norm statistics in train mode are taken over all
// positions of all sentences in the batch. Gradients are computed when
// `with_gradients` is set and labels are supplied.
BatchResult run_batch(const Model& model, std::span<const Tensor* const> inputs,
                      std::span<const std::size_t> labels, Mode mode, std::uint64_t dropout_seed,
                      bool with_gradients);

std::size_t argmax(std::span<const double> values);

// Adam over every trainable tensor; embeddings are not parameters.
class Trainer {
 public:
  explicit Trainer(Model& model);

  // One update. Returns the batch loss measured before the update.
  double step(std::span<const Tensor* const> inputs, std::span<const std::size_t> labels,
              std::uint64_t dropout_seed);

 private:
  Model& model_;
  std::vector<AdamState> states_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> test_accuracy;
};

// Shuffles the train split every epoch with the config's seed and applies
// mini-batch Adam updates. Test accuracy is recorded when a test split exists.
std::vector<EpochMetrics> train(Model& model, const Dataset& dataset, const EmbeddingTable& table,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Top-1 accuracy in infer mode; ties resolve to the lowest class index.
double evaluate(const Model& model, const Dataset& dataset, const EmbeddingTable& table,
                Split split);

}  // namespace textcnn
