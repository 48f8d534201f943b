#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "lorasc/data/dataset.hpp"
#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

// output_dim x input_dim matrix of exact rank `rank`, built as G1 * G2 with
// Gaussian factors scaled so that ||T x|| is O(||x||).
MatrixD make_teacher(std::uint64_t seed, std::size_t input_dim, std::size_t output_dim,
                     std::size_t rank);

// `base` plus a rank-`shift_rank` perturbation of relative size `shift_scale`.
// Used to derive a narrow task that is related to a broad pre-training task.
MatrixD shift_teacher(const MatrixD& base, std::uint64_t seed, std::size_t shift_rank,
                      double shift_scale);

// x ~ N(0, I), y = T x + label_noise * N(0, I).
Dataset sample_teacher_data(const MatrixD& teacher, std::size_t n, double label_noise,
                            std::uint64_t seed);

Dataset gen_teacher_student(std::uint64_t seed, std::size_t n, std::size_t input_dim,
                            std::size_t output_dim, std::size_t teacher_rank, double label_noise);

enum class SequenceKind {
    Majority,  // label = strict plurality token
    ModSum,    // label = sum of tokens mod vocab
};

std::string_view to_string(SequenceKind kind) noexcept;
SequenceKind parse_sequence_kind(std::string_view text);

// Token sequences with exact labels, classes == vocab. Majority labels are
// drawn uniformly first and the sequence is then forced to have that token as
// strict plurality, so the label distribution is uniform.
Dataset gen_sequence_task(std::uint64_t seed, std::size_t n, std::size_t seq_len, std::size_t vocab,
                          SequenceKind kind);

}  // namespace lorasc
