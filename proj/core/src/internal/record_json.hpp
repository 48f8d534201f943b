#pragma once

#include <json.hpp>

#include "lorasc/eval/metrics.hpp"

namespace lorasc::detail {

nlohmann::json record_to_json(const MetricsRecord& r);
MetricsRecord record_from_json(const nlohmann::json& j);

}  // namespace lorasc::detail
