#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

enum class TaskKind {
    Regression,      // inputs: features, targets: real matrix, MSE
    Classification,  // inputs: features, labels in [0, classes), cross-entropy
    Sequence,        // inputs: token ids (n x seq_len), labels, cross-entropy
};

std::string_view to_string(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view text);

// Examples are rows. Token ids for sequence tasks are stored as exact
// integers in `inputs` so every task shares one container.
struct Dataset {
    TaskKind kind = TaskKind::Regression;
    MatrixD inputs;
    MatrixD targets;          // regression only
    std::vector<int> labels;  // classification / sequence only
    std::size_t classes = 0;
    std::string provenance;

    std::size_t size() const noexcept { return inputs.rows(); }
    bool empty() const noexcept { return size() == 0; }
    bool has_labels() const noexcept { return kind != TaskKind::Regression; }

    // Rows `indices` in the given order.
    Dataset subset(std::span<const std::size_t> indices) const;

    // Throws ShapeError / ArgumentError if counts or labels are inconsistent.
    void validate() const;
};

struct SplitSpec {
    std::size_t n_train = 1000;
    std::size_t n_val = 500;
    std::size_t n_test = 1000;
    std::uint64_t seed = 0;

    std::size_t total() const noexcept { return n_train + n_val + n_test; }
};

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
    // Pool row indices backing each split; disjoint and exhaustive.
    std::vector<std::size_t> train_index;
    std::vector<std::size_t> val_index;
    std::vector<std::size_t> test_index;
};

// Seeded permutation of the pool, cut into train/val/test. The pool must hold
// exactly spec.total() examples.
Splits split_dataset(const Dataset& pool, const SplitSpec& spec);

bool bit_equal(const Dataset& a, const Dataset& b) noexcept;

}  // namespace lorasc
