#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lorasc/model/backbone.hpp"
#include "lorasc/numkit/matrix.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/optim/adamw.hpp"

namespace lorasc {

// Delta s * B * A for one target of shape d x k, with B: d x r and A: r x k.
template <typename T>
struct LoraPair {
    std::string target;
    Matrix<T> a;  // r x k
    Matrix<T> b;  // d x r
    std::size_t rank = 0;
    T scaling = T{1};

    std::size_t d() const noexcept { return b.rows(); }
    std::size_t k() const noexcept { return a.cols(); }
    std::size_t trainable_count() const noexcept { return rank * (d() + k()); }

    bool operator==(const LoraPair&) const = default;
};

// lora_alpha / r; lora_alpha <= 0 means "equal to r", i.e. scaling 1.
double lora_scaling(double lora_alpha, std::size_t rank);

// A ~ U(-1/sqrt(k), 1/sqrt(k)), B = 0. Throws ArgumentError unless
// 1 <= r <= min(d, k).
template <typename T>
LoraPair<T> init_pair(const std::string& target, std::size_t d, std::size_t k, std::size_t r, T scaling,
                      Rng& rng);

template <typename T>
Matrix<T> delta(const LoraPair<T>& pair);

// The same product accumulated in double, for audits and rank diagnostics.
template <typename T>
MatrixD delta_f64(const LoraPair<T>& pair);

// backbone[target] += delta(pair). LookupError for a missing target.
template <typename T>
void merge_into(Backbone<T>& backbone, const LoraPair<T>& pair);

// Per-factor EMA: A' = alpha A_slow + (1 - alpha) A_fast, likewise B.
// alpha = 1 returns slow and alpha = 0 returns fast, bit for bit.
template <typename T>
LoraPair<T> ema_update(const LoraPair<T>& slow, const LoraPair<T>& fast, double alpha);

template <typename T>
struct ExpertState {
    std::vector<LoraPair<T>> slow;
    std::vector<LoraPair<T>> fast;
    std::size_t epoch = 1;

    bool operator==(const ExpertState&) const = default;
};

// Slow pairs drawn with init_pair for every target, fast cloned from slow.
template <typename T>
ExpertState<T> init_expert(const Backbone<T>& backbone, std::span<const std::string> targets, std::size_t rank,
                           T scaling, Rng& rng);

// Fresh fast pairs; slow untouched. Only valid from the second epoch on.
template <typename T>
void reinit_fast(ExpertState<T>& expert, Rng& rng);

// Optimizer tags for pairs in tape order: A0, B0, A1, B1, ...
template <typename T>
std::vector<ParamTag> factor_tags(std::span<const LoraPair<T>> pairs);

// sqrt of the summed squared Frobenius norms of all factors.
template <typename T>
double factor_norm(std::span<const LoraPair<T>> pairs);

}  // namespace lorasc
