#include "textcnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "textcnn/error.hpp"
#include "textcnn/rng.hpp"

namespace textcnn {

void ModelConfig::validate() const {
  if (windows.empty()) throw Error("model config: windows must be nonempty");
  if (!std::is_sorted(windows.begin(), windows.end()) ||
      std::adjacent_find(windows.begin(), windows.end()) != windows.end()) {
    throw Error("model config: windows must be strictly ascending");
  }
  if (windows.front() == 0) throw Error("model config: window must be positive");
  if (feature_maps == 0) throw Error("model config: feature_maps must be at least 1");
  if (conv_layers_per_tower != 2) throw Error("model config: exactly 2 conv layers per tower are supported");
  if (embed_dim == 0) throw Error("model config: embed_dim must be positive");
  if (num_classes < 2) throw Error("model config: need at least 2 classes");
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw Error("model config: dropout_keep must be in (0, 1]");
  if (batch_size == 0) throw Error("model config: batch_size must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw Error("model config: bn_momentum must be in (0, 1]");
  if (!(bn_epsilon > 0.0)) throw Error("model config: bn_epsilon must be positive");
  if (adam.lr < 0.0) throw Error("model config: learning rate must be non-negative");
}

std::size_t ModelConfig::min_length() const { return 2 * windows.back() - 1; }

namespace {

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

}  // namespace

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  model.config.seed = seed;
  Rng rng(seed);
  const std::size_t k = config.feature_maps;
  for (std::size_t h : config.windows) {
    Tower t;
    t.window = h;
    t.conv1 = ConvParams(h, config.embed_dim, k);
    glorot_fill(t.conv1.weights, h * config.embed_dim, h * k, rng);
    t.bn1 = BatchNormParams(k, config.bn_momentum, config.bn_epsilon);
    t.conv2 = ConvParams(h, k, k);
    glorot_fill(t.conv2.weights, h * k, h * k, rng);
    t.bn2 = BatchNormParams(k, config.bn_momentum, config.bn_epsilon);
    model.towers.push_back(std::move(t));
  }
  model.head_weights = Tensor({config.num_classes, config.feature_width()});
  glorot_fill(model.head_weights, config.feature_width(), config.num_classes, rng);
  model.head_bias = Tensor({config.num_classes});
  return model;
}

namespace {

template <typename M>
auto collect(M& model, bool with_stats) {
  using Ptr = decltype(&model.head_bias);
  std::vector<std::pair<std::string, Ptr>> out;
  for (std::size_t i = 0; i < model.towers.size(); ++i) {
    auto& t = model.towers[i];
    const std::string p = "tower" + std::to_string(t.window) + ".";
    out.emplace_back(p + "conv1.weights", &t.conv1.weights);
    out.emplace_back(p + "conv1.bias", &t.conv1.bias);
    out.emplace_back(p + "bn1.gamma", &t.bn1.gamma);
    out.emplace_back(p + "bn1.beta", &t.bn1.beta);
    out.emplace_back(p + "conv2.weights", &t.conv2.weights);
    out.emplace_back(p + "conv2.bias", &t.conv2.bias);
    out.emplace_back(p + "bn2.gamma", &t.bn2.gamma);
    out.emplace_back(p + "bn2.beta", &t.bn2.beta);
    if (with_stats) {
      out.emplace_back(p + "bn1.running_mean", &t.bn1.running_mean);
      out.emplace_back(p + "bn1.running_var", &t.bn1.running_var);
      out.emplace_back(p + "bn2.running_mean", &t.bn2.running_mean);
      out.emplace_back(p + "bn2.running_var", &t.bn2.running_var);
    }
  }
  out.emplace_back("head.weights", &model.head_weights);
  out.emplace_back("head.bias", &model.head_bias);
  return out;
}

std::vector<NamedTensor> to_named(std::vector<std::pair<std::string, Tensor*>> items) {
  std::vector<NamedTensor> out;
  out.reserve(items.size());
  for (auto& [name, t] : items) out.push_back({std::move(name), t});
  return out;
}

}  // namespace

std::vector<NamedTensor> trainable_parameters(Model& model) {
  return to_named(collect(model, false));
}

std::vector<NamedTensor> all_tensors(Model& model) { return to_named(collect(model, true)); }

Tensor embed_sentence(std::span<const std::string> tokens, const EmbeddingTable& table,
                      std::size_t min_length) {
  const std::size_t rows = std::max(tokens.size(), min_length);
  Tensor m({rows, table.dim()});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (auto v = table.lookup(tokens[t])) std::copy(v->begin(), v->end(), m.row(t).begin());
  }
  return m;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

namespace {

// Stacked per-tower intermediates for one batch.
struct TowerPass {
  std::vector<std::size_t> offset1;  // row offsets into pre1/z1 per sentence
  std::vector<std::size_t> offset2;
  Tensor pre1, z1, a1;
  Tensor pre2, z2, a2;
  std::vector<MaxPoolResult> pooled;
};

// Train-mode batch norm removes any per-channel shift, so a conv bias in
// front of it cancels exactly. It is left out of the convolution there and
// added back to the reported batch mean, which feeds the running statistics.
ConvParams without_bias(const ConvParams& p) {
  ConvParams out = p;
  out.bias.fill(0.0);
  return out;
}

void shift(Tensor& mean, const Tensor& bias) {
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += bias[i];
}

Tensor rows_view_copy(const Tensor& stacked, std::size_t begin, std::size_t count) {
  const std::size_t c = stacked.cols();
  Tensor out({count, c});
  std::copy_n(stacked.data() + begin * c, count * c, out.data());
  return out;
}

}  // namespace

BatchResult run_batch(const Model& model, std::span<const Tensor* const> inputs,
                      std::span<const std::size_t> labels, Mode mode, std::uint64_t dropout_seed,
                      bool with_gradients) {
  const ModelConfig& cfg = model.config;
  const std::size_t batch = inputs.size();
  if (batch == 0) throw Error("run_batch: empty batch");
  if (!labels.empty() && labels.size() != batch) throw ShapeError("run_batch: labels/inputs length mismatch");
  const bool have_labels = !labels.empty();
  with_gradients = with_gradients && have_labels;
  for (const Tensor* x : inputs) {
    if (x->rank() != 2 || x->cols() != cfg.embed_dim) throw ShapeError("run_batch: input must be T x embed_dim");
    if (x->rows() < cfg.min_length()) {
      throw ShapeError("run_batch: input of length " + std::to_string(x->rows()) +
                       " is shorter than the padded minimum " + std::to_string(cfg.min_length()));
    }
  }

  const std::size_t k = cfg.feature_maps;
  const std::size_t width = cfg.feature_width();
  std::vector<TowerPass> passes(model.towers.size());
  BatchResult result;
  if (mode == Mode::train) result.stats.resize(model.towers.size());
  Tensor features({batch, width});

  for (std::size_t ti = 0; ti < model.towers.size(); ++ti) {
    const Tower& tw = model.towers[ti];
    TowerPass& tp = passes[ti];
    const std::size_t h = tw.window;
    const bool train = mode == Mode::train;
    const ConvParams conv1 = train ? without_bias(tw.conv1) : tw.conv1;
    const ConvParams conv2 = train ? without_bias(tw.conv2) : tw.conv2;
    std::size_t rows1 = 0, rows2 = 0;
    for (const Tensor* x : inputs) {
      tp.offset1.push_back(rows1);
      tp.offset2.push_back(rows2);
      rows1 += x->rows() - h + 1;
      rows2 += x->rows() - 2 * h + 2;
    }
    tp.pre1 = Tensor({rows1, k});
    for (std::size_t s = 0; s < batch; ++s)
      conv_forward_rows(inputs[s]->values(), inputs[s]->rows(), conv1,
                        tp.pre1.values().subspan(tp.offset1[s] * k));
    BatchNormOutput bn1 = batchnorm_apply(tp.pre1, tw.bn1, mode);
    tp.z1 = std::move(bn1.output);
    tp.a1 = relu(tp.z1);

    tp.pre2 = Tensor({rows2, k});
    for (std::size_t s = 0; s < batch; ++s) {
      const std::size_t steps = inputs[s]->rows() - h + 1;
      conv_forward_rows(tp.a1.values().subspan(tp.offset1[s] * k, steps * k), steps, conv2,
                        tp.pre2.values().subspan(tp.offset2[s] * k));
    }
    BatchNormOutput bn2 = batchnorm_apply(tp.pre2, tw.bn2, mode);
    tp.z2 = std::move(bn2.output);
    tp.a2 = relu(tp.z2);
    if (train) {
      shift(bn1.mean, tw.conv1.bias);
      shift(bn2.mean, tw.conv2.bias);
      result.stats[ti] = {std::move(bn1.mean), std::move(bn1.var), std::move(bn2.mean),
                          std::move(bn2.var)};
    }

    for (std::size_t s = 0; s < batch; ++s) {
      const std::size_t steps = inputs[s]->rows() - 2 * h + 2;
      tp.pooled.push_back(maxpool_time(rows_view_copy(tp.a2, tp.offset2[s], steps)));
      std::copy_n(tp.pooled.back().values.data(), k, features.row(s).data() + ti * k);
    }
  }

  if (with_gradients) {
    for (const auto& entry : collect(model, false)) result.gradients.emplace_back(entry.second->shape());
  }
  const std::size_t head_w = result.gradients.size() >= 2 ? result.gradients.size() - 2 : 0;
  Tensor grad_features({batch, width});
  const double inv_batch = 1.0 / static_cast<double>(batch);

  for (std::size_t s = 0; s < batch; ++s) {
    const Tensor feat({width}, std::vector<double>(features.row(s).begin(), features.row(s).end()));
    const DropoutResult dropped =
        dropout(feat, cfg.dropout_keep, derive_seed(dropout_seed, s), mode);
    if (!have_labels) {
      Tensor logits({cfg.num_classes});
      for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        double v = model.head_bias[c];
        for (std::size_t f = 0; f < width; ++f) v += model.head_weights(c, f) * dropped.output[f];
        logits[c] = v;
      }
      result.probs.push_back(softmax(logits.values()));
      continue;
    }
    DenseSoftmaxResult head =
        dense_softmax_xent(dropped.output.values(), model.head_weights, model.head_bias, labels[s]);
    result.loss += head.loss * inv_batch;
    result.probs.push_back(std::move(head.probs));
    if (!with_gradients) continue;
    Tensor& gw = result.gradients[head_w];
    Tensor& gb = result.gradients[head_w + 1];
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += head.grad_weights[i] * inv_batch;
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += head.grad_bias[i] * inv_batch;
    for (double& g : head.grad_features.values()) g *= inv_batch;
    const Tensor gf = dropout_backward(dropped.mask, cfg.dropout_keep, head.grad_features);
    std::copy_n(gf.data(), width, grad_features.row(s).data());
  }
  if (!with_gradients) return result;

  for (std::size_t ti = 0; ti < model.towers.size(); ++ti) {
    const Tower& tw = model.towers[ti];
    TowerPass& tp = passes[ti];
    const std::size_t h = tw.window;
    Tensor* g = &result.gradients[ti * 8];

    Tensor g_a2(tp.a2.shape());
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t j = 0; j < k; ++j)
        g_a2(tp.offset2[s] + tp.pooled[s].rows[j], j) = grad_features(s, ti * k + j);
    const Tensor g_z2 = relu_backward(tp.z2, g_a2);
    BatchNormGrads bn2 = batchnorm_backward(tp.pre2, tw.bn2, g_z2, mode);
    g[6] = std::move(bn2.gamma);
    g[7] = std::move(bn2.beta);

    Tensor g_a1(tp.a1.shape());
    for (std::size_t s = 0; s < batch; ++s) {
      const std::size_t steps = inputs[s]->rows() - h + 1;
      const std::size_t positions = steps - h + 1;
      conv_backward_rows(tp.a1.values().subspan(tp.offset1[s] * k, steps * k), steps, tw.conv2,
                         bn2.input.values().subspan(tp.offset2[s] * k, positions * k),
                         g_a1.values().subspan(tp.offset1[s] * k, steps * k), g[4].values(),
                         g[5].values());
    }
    const Tensor g_z1 = relu_backward(tp.z1, g_a1);
    BatchNormGrads bn1 = batchnorm_backward(tp.pre1, tw.bn1, g_z1, mode);
    g[2] = std::move(bn1.gamma);
    g[3] = std::move(bn1.beta);
    for (std::size_t s = 0; s < batch; ++s) {
      const std::size_t steps = inputs[s]->rows();
      const std::size_t positions = steps - h + 1;
      conv_backward_rows(inputs[s]->values(), steps, tw.conv1,
                         bn1.input.values().subspan(tp.offset1[s] * k, positions * k), {},
                         g[0].values(), g[1].values());
    }
  }
  return result;
}

ForwardResult forward(const Model& model, const Tensor& embedded, Mode mode,
                      std::uint64_t dropout_seed) {
  const ModelConfig& cfg = model.config;
  if (embedded.rank() != 2 || embedded.cols() != cfg.embed_dim) {
    throw ShapeError("forward: input must be T x embed_dim");
  }
  if (embedded.rows() < cfg.min_length()) {
    throw ShapeError("forward: input of length " + std::to_string(embedded.rows()) +
                     " is shorter than the padded minimum " + std::to_string(cfg.min_length()));
  }
  ForwardResult r;
  const std::size_t k = cfg.feature_maps;
  r.features = Tensor({cfg.feature_width()});
  for (std::size_t ti = 0; ti < model.towers.size(); ++ti) {
    const Tower& tw = model.towers[ti];
    TowerActivations act;
    act.window = tw.window;
    const bool train = mode == Mode::train;
    act.layer1 = relu(
        batchnorm_apply(conv_valid_forward(embedded, train ? without_bias(tw.conv1) : tw.conv1), tw.bn1, mode)
            .output);
    act.layer2 = relu(
        batchnorm_apply(conv_valid_forward(act.layer1, train ? without_bias(tw.conv2) : tw.conv2), tw.bn2, mode)
            .output);
    const MaxPoolResult pooled = maxpool_time(act.layer2);
    std::copy_n(pooled.values.data(), k, r.features.data() + ti * k);
    r.towers.push_back(std::move(act));
  }
  const DropoutResult dropped =
      dropout(r.features, cfg.dropout_keep, derive_seed(dropout_seed, 0), mode);
  r.logits = Tensor({cfg.num_classes});
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    double v = model.head_bias[c];
    for (std::size_t f = 0; f < cfg.feature_width(); ++f) v += model.head_weights(c, f) * dropped.output[f];
    r.logits[c] = v;
  }
  r.probs = softmax(r.logits.values());
  return r;
}

ForwardResult forward(const Model& model, std::span<const std::string> tokens,
                      const EmbeddingTable& table, Mode mode, std::uint64_t dropout_seed) {
  return forward(model, embed_sentence(tokens, table, model.config.min_length()), mode,
                 dropout_seed);
}

Trainer::Trainer(Model& model) : model_(model) {
  for (const NamedTensor& p : trainable_parameters(model_))
    states_.push_back(AdamState::for_param(*p.tensor, model_.config.adam));
}

double Trainer::step(std::span<const Tensor* const> inputs, std::span<const std::size_t> labels,
                     std::uint64_t dropout_seed) {
  BatchResult r = run_batch(model_, inputs, labels, Mode::train, dropout_seed, true);
  if (!std::isfinite(r.loss)) throw Error("training diverged: non-finite loss");
  for (std::size_t ti = 0; ti < model_.towers.size(); ++ti) {
    Tower& tw = model_.towers[ti];
    update_running_stats(tw.bn1, r.stats[ti].bn1_mean, r.stats[ti].bn1_var);
    update_running_stats(tw.bn2, r.stats[ti].bn2_mean, r.stats[ti].bn2_var);
  }
  std::vector<NamedTensor> params = trainable_parameters(model_);
  for (std::size_t i = 0; i < params.size(); ++i) adam_step(*params[i].tensor, r.gradients[i], states_[i]);
  return r.loss;
}

std::vector<EpochMetrics> train(Model& model, const Dataset& dataset, const EmbeddingTable& table,
                                const std::function<void(const EpochMetrics&)>& on_epoch) {
  const ModelConfig& cfg = model.config;
  if (table.dim() != cfg.embed_dim) {
    throw Error("embedding dimension " + std::to_string(table.dim()) + " does not match model embed_dim " +
                std::to_string(cfg.embed_dim));
  }
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  for (const Sentence& s : dataset.sentences) {
    if (s.split != Split::train) continue;
    inputs.push_back(embed_sentence(s.tokens, table, cfg.min_length()));
    labels.push_back(s.label);
  }
  if (inputs.empty()) throw Error("training split is empty");
  const bool has_test = dataset.count(Split::test) > 0;

  Trainer trainer(model);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(inputs.size());
  std::vector<EpochMetrics> history;
  std::vector<const Tensor*> batch_inputs;
  std::vector<std::size_t> batch_labels;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch_inputs.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_inputs.push_back(&inputs[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      loss_sum += trainer.step(batch_inputs, batch_labels, rng.next()) * static_cast<double>(end - start);
    }
    model.epoch += 1;
    EpochMetrics m;
    m.epoch = model.epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    if (has_test) m.test_accuracy = evaluate(model, dataset, table, Split::test);
    if (on_epoch) on_epoch(m);
    history.push_back(m);
  }
  return history;
}

double evaluate(const Model& model, const Dataset& dataset, const EmbeddingTable& table,
                Split split) {
  std::size_t total = 0, correct = 0;
  for (const Sentence& s : dataset.sentences) {
    if (s.split != split) continue;
    const ForwardResult r = forward(model, s.tokens, table, Mode::infer);
    ++total;
    if (argmax(r.probs.values()) == s.label) ++correct;
  }
  if (total == 0) throw Error(std::string("cannot evaluate: ") + to_string(split) + " split is empty");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace textcnn
