#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lorasc/data/dataset.hpp"
#include "lorasc/model/backbone.hpp"
#include "lorasc/numkit/tape.hpp"

namespace lorasc {

// A low-rank adapter placed on the tape: the target computes
// x W^T + scaling * (x A^T) B^T.
template <typename T>
struct AdapterBinding {
    Var<T> a;
    Var<T> b;
    T scaling = T{1};
};

// How backbone tensors appear on the tape. Anything not listed in `params`
// enters as a constant (no gradient).
template <typename T>
struct Bindings {
    std::map<std::string, Var<T>> params;
    std::map<std::string, AdapterBinding<T>> adapters;
};

// Model outputs for a batch of examples (rows of `inputs`): regression values
// or class logits, n x output_dim. Throws ShapeError naming the target when an
// adapter does not conform.
template <typename T>
Var<T> forward(const Backbone<T>& backbone, Tape<T>& tape, const Bindings<T>& bindings,
               const MatrixD& inputs);

// Mean squared error over all output elements (regression) or mean
// cross-entropy over the batch (classification / sequence).
template <typename T>
Var<T> task_loss(Var<T> outputs, const Dataset& batch);

struct PretrainOptions {
    std::size_t steps = 0;
    std::size_t batch_size = 32;
    double lr = 3e-3;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    double initial_loss = 0.0;  // full-data loss before training
    double final_loss = 0.0;    // full-data loss after training
    std::vector<double> curve;  // per-step batch loss
};

// Full-parameter AdamW training on a broad task; the result is the frozen W0.
// Throws TrainingError (with the last finite loss) on divergence.
template <typename T>
Backbone<T> pretrain_backbone(Backbone<T> backbone, const Dataset& data, const PretrainOptions& options,
                              PretrainResult* result = nullptr);

// Mean task loss of the adapter-free backbone over a whole dataset.
template <typename T>
double dataset_loss(const Backbone<T>& backbone, const Dataset& data);

}  // namespace lorasc
