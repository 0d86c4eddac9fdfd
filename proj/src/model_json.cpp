#include "model_json.hpp"

namespace textcnn {

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"windows", c.windows},
                        {"feature_maps", c.feature_maps},
                        {"conv_layers_per_tower", c.conv_layers_per_tower},
                        {"embed_dim", c.embed_dim},
                        {"num_classes", c.num_classes},
                        {"dropout_keep", c.dropout_keep},
                        {"batch_size", c.batch_size},
                        {"epochs", c.epochs},
                        {"seed", c.seed},
                        {"learning_rate", c.adam.lr},
                        {"beta1", c.adam.beta1},
                        {"beta2", c.adam.beta2},
                        {"adam_eps", c.adam.eps},
                        {"bn_momentum", c.bn_momentum},
                        {"bn_epsilon", c.bn_epsilon}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.windows = j.at("windows").get<std::vector<std::size_t>>();
  c.feature_maps = j.at("feature_maps");
  c.conv_layers_per_tower = j.at("conv_layers_per_tower");
  c.embed_dim = j.at("embed_dim");
  c.num_classes = j.at("num_classes");
  c.dropout_keep = j.at("dropout_keep");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.adam.lr = j.at("learning_rate");
  c.adam.beta1 = j.at("beta1");
  c.adam.beta2 = j.at("beta2");
  c.adam.eps = j.at("adam_eps");
  c.bn_momentum = j.at("bn_momentum");
  c.bn_epsilon = j.at("bn_epsilon");
  return c;
}

}  // namespace textcnn
