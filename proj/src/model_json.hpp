#pragma once

#include "json.hpp"
#include "textcnn/model.hpp"

namespace textcnn {

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace textcnn
