#pragma once

// nlohmann/json conversions shared by the core's serializers. Private to the
// library; public headers expose string-based entry points only.

#include <json.hpp>

#include "cgmvae/checkpoint.hpp"
#include "cgmvae/losses.hpp"
#include "cgmvae/metrics.hpp"
#include "cgmvae/model.hpp"
#include "cgmvae/trainer.hpp"

namespace cgmvae::detail {

using nlohmann::json;

json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

json to_json(const LossBreakdown& b);
json to_json(const MetricsReport& r);

json to_json(const DataProvenance& d);
DataProvenance data_provenance_from_json(const json& j);

}  // namespace cgmvae::detail
