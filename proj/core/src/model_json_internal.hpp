#pragma once

#include "resin/hypernet.hpp"

#include <json.hpp>

namespace resin::detail {

// Config block stored inside checkpoint files.
nlohmann::json model_config_json(const HyperNetModel& model);

// Rebuilds a model from a checkpoint config block plus its parameter vector.
HyperNetModel model_from_json(const nlohmann::json& config, std::vector<double> params);

} // namespace resin::detail
