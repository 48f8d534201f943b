#include "lorasc/data/generators.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lorasc/errors.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

MatrixD make_teacher(std::uint64_t seed, std::size_t input_dim, std::size_t output_dim,
                     std::size_t rank) {
    if (rank < 1 || rank > std::min(input_dim, output_dim)) {
        throw ArgumentError("make_teacher: rank " + std::to_string(rank) + " outside [1, min(" +
                            std::to_string(input_dim) + ", " + std::to_string(output_dim) + ")]");
    }
    Rng rng(seed, streams::kTeacher);
    auto left = sample_normal<double>(output_dim, rank, 1.0, rng);
    auto right = sample_normal<double>(rank, input_dim, 1.0, rng);
    auto t = matmul(left, right);
    t *= 1.0 / std::sqrt(static_cast<double>(rank * input_dim));
    return t;
}

MatrixD shift_teacher(const MatrixD& base, std::uint64_t seed, std::size_t shift_rank,
                      double shift_scale) {
    if (shift_rank == 0 || shift_scale == 0.0) {
        return base;
    }
    auto delta = make_teacher(seed ^ 0x5EEDF00DULL, base.cols(), base.rows(), shift_rank);
    const double target = shift_scale * frobenius_norm(base);
    delta *= target / frobenius_norm(delta);
    return add(base, delta);
}

Dataset sample_teacher_data(const MatrixD& teacher, std::size_t n, double label_noise,
                            std::uint64_t seed) {
    if (label_noise < 0.0) {
        throw ArgumentError("sample_teacher_data: negative label noise");
    }
    Rng xr(seed, streams::kSamples);
    Rng nr(seed, streams::kLabelNoise);
    Dataset d;
    d.kind = TaskKind::Regression;
    d.inputs = sample_normal<double>(n, teacher.cols(), 1.0, xr);
    d.targets = matmul_nt(d.inputs, teacher);
    if (label_noise > 0.0) {
        d.targets += sample_normal<double>(n, teacher.rows(), label_noise, nr);
    }
    d.provenance = "teacher_student(seed=" + std::to_string(seed) + ")";
    return d;
}

Dataset gen_teacher_student(std::uint64_t seed, std::size_t n, std::size_t input_dim,
                            std::size_t output_dim, std::size_t teacher_rank, double label_noise) {
    return sample_teacher_data(make_teacher(seed, input_dim, output_dim, teacher_rank), n,
                               label_noise, seed);
}

std::string_view to_string(SequenceKind kind) noexcept {
    return kind == SequenceKind::Majority ? "majority" : "modsum";
}

SequenceKind parse_sequence_kind(std::string_view text) {
    if (text == "majority") return SequenceKind::Majority;
    if (text == "modsum") return SequenceKind::ModSum;
    throw ConfigError("unknown sequence task kind '" + std::string(text) +
                      "' (expected majority or modsum)");
}

Dataset gen_sequence_task(std::uint64_t seed, std::size_t n, std::size_t seq_len, std::size_t vocab,
                          SequenceKind kind) {
    if (vocab < 2) {
        throw ArgumentError("gen_sequence_task: vocab must be >= 2, got " + std::to_string(vocab));
    }
    if (seq_len < 1) {
        throw ArgumentError("gen_sequence_task: seq_len must be >= 1");
    }
    Rng rng(seed, streams::kSamples);
    Dataset d;
    d.kind = TaskKind::Sequence;
    d.classes = vocab;
    d.inputs = MatrixD(n, seq_len);
    d.labels.resize(n);
    std::vector<std::size_t> tokens(seq_len);
    std::vector<std::size_t> counts(vocab);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& t : tokens) {
            t = rng.below(vocab);
        }
        std::size_t label = 0;
        if (kind == SequenceKind::Majority) {
            label = rng.below(vocab);
            for (;;) {
                std::fill(counts.begin(), counts.end(), 0);
                for (auto t : tokens) {
                    ++counts[t];
                }
                std::size_t best_other = 0;
                for (std::size_t v = 0; v < vocab; ++v) {
                    if (v != label) {
                        best_other = std::max(best_other, counts[v]);
                    }
                }
                if (counts[label] > best_other) {
                    break;
                }
                // Overwrite a uniformly chosen non-label position.
                std::size_t pick = rng.below(seq_len - counts[label]);
                for (auto& t : tokens) {
                    if (t != label && pick-- == 0) {
                        t = label;
                        break;
                    }
                }
            }
        } else {
            std::size_t s = 0;
            for (auto t : tokens) {
                s += t;
            }
            label = s % vocab;
        }
        for (std::size_t j = 0; j < seq_len; ++j) {
            d.inputs(i, j) = static_cast<double>(tokens[j]);
        }
        d.labels[i] = static_cast<int>(label);
    }
    d.provenance = "sequence(seed=" + std::to_string(seed) + ")";
    return d;
}

}  // namespace lorasc
