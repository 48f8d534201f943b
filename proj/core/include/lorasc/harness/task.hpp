#pragma once

#include <cstdint>

#include "lorasc/cascade/run.hpp"
#include "lorasc/harness/config.hpp"
#include "lorasc/model/forward.hpp"

namespace lorasc {

// Train / val / test splits plus one corrupted copy of test per corruption
// spec, all derived deterministically from the config.
RunData build_run_data(const RunConfig& config);

// The frozen starting point W0: built from model.seed, then pre-trained on
// the broad task when the data source has one.
template <typename T>
Backbone<T> build_backbone(const RunConfig& config, PretrainResult* pretrain = nullptr);

// Cascade settings for one seed of the config.
CascadeConfig cascade_for(const RunConfig& config, std::uint64_t seed);

}  // namespace lorasc
