#include "lorasc/data/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "lorasc/errors.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

std::string_view to_string(TaskKind kind) noexcept {
    switch (kind) {
    case TaskKind::Regression:
        return "regression";
    case TaskKind::Classification:
        return "classification";
    case TaskKind::Sequence:
        return "sequence";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
    if (text == "regression") return TaskKind::Regression;
    if (text == "classification") return TaskKind::Classification;
    if (text == "sequence") return TaskKind::Sequence;
    throw ConfigError("unknown task kind '" + std::string(text) +
                      "' (expected regression, classification or sequence)");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.kind = kind;
    out.classes = classes;
    out.provenance = provenance;
    out.inputs = MatrixD(indices.size(), inputs.cols());
    if (kind == TaskKind::Regression) {
        out.targets = MatrixD(indices.size(), targets.cols());
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= size()) {
            throw ShapeError("Dataset::subset: index " + std::to_string(src) + " out of " +
                             std::to_string(size()) + " examples");
        }
        std::copy(inputs.row(src).begin(), inputs.row(src).end(), out.inputs.row(i).begin());
        if (kind == TaskKind::Regression) {
            std::copy(targets.row(src).begin(), targets.row(src).end(), out.targets.row(i).begin());
        } else {
            out.labels.push_back(labels[src]);
        }
    }
    return out;
}

void Dataset::validate() const {
    if (kind == TaskKind::Regression) {
        if (targets.rows() != inputs.rows()) {
            throw ShapeError("Dataset: " + std::to_string(inputs.rows()) + " inputs but " +
                             std::to_string(targets.rows()) + " targets");
        }
        return;
    }
    if (labels.size() != inputs.rows()) {
        throw ShapeError("Dataset: " + std::to_string(inputs.rows()) + " inputs but " +
                         std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw ArgumentError("Dataset: label " + std::to_string(labels[i]) + " at row " +
                                std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

Splits split_dataset(const Dataset& pool, const SplitSpec& spec) {
    if (pool.size() != spec.total()) {
        throw ArgumentError("split_dataset: pool has " + std::to_string(pool.size()) +
                            " examples, split spec needs " + std::to_string(spec.total()));
    }
    std::vector<std::size_t> perm(pool.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(spec.seed, streams::kSplit);
    for (std::size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    Splits s;
    const auto b = perm.begin();
    s.train_index.assign(b, b + static_cast<std::ptrdiff_t>(spec.n_train));
    s.val_index.assign(b + static_cast<std::ptrdiff_t>(spec.n_train),
                       b + static_cast<std::ptrdiff_t>(spec.n_train + spec.n_val));
    s.test_index.assign(b + static_cast<std::ptrdiff_t>(spec.n_train + spec.n_val), perm.end());
    s.train = pool.subset(s.train_index);
    s.val = pool.subset(s.val_index);
    s.test = pool.subset(s.test_index);
    return s;
}

bool bit_equal(const Dataset& a, const Dataset& b) noexcept {
    return a.kind == b.kind && a.classes == b.classes && a.labels == b.labels &&
           bit_equal(a.inputs, b.inputs) && bit_equal(a.targets, b.targets);
}

}  // namespace lorasc
