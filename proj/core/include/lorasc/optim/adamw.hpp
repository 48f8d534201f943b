#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    bool operator==(const AdamWConfig&) const = default;
};

// LoRA+ keeps the B factor on a fixed multiple of the A learning rate.
struct LrPolicy {
    double b_multiplier = 1.0;

    void validate() const;
};

// Identifies one optimized tensor and whether it is a B factor.
struct ParamTag {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool is_b_factor = false;
};

template <typename T>
struct AdamWState {
    AdamWConfig config;
    std::vector<std::string> names;
    std::vector<Matrix<T>> m;
    std::vector<Matrix<T>> v;
    std::vector<double> lr_scale;  // 1 for A factors, LrPolicy::b_multiplier for B
    std::uint64_t step = 0;

    bool operator==(const AdamWState&) const = default;
};

// Fresh optimizer over `params`: zero moments, step 0, B factors tagged with
// the policy multiplier. Throws ContractError for an empty set.
template <typename T>
AdamWState<T> reinit_optimizer(std::span<const ParamTag> params, const LrPolicy& policy,
                               const AdamWConfig& config = {});

// Bias-corrected Adam update with decoupled decay:
//   p <- p - lr_i * (m_hat / (sqrt(v_hat) + eps) + wd * p),  lr_i = lr * lr_scale[i]
template <typename T>
void adamw_step(AdamWState<T>& state, std::span<Matrix<T>* const> params,
                std::span<const Matrix<T>> grads, double lr);

// Learning rate actually applied to parameter `index` for a base lr.
template <typename T>
double effective_lr(const AdamWState<T>& state, std::size_t index, double lr) {
    return lr * state.lr_scale.at(index);
}

}  // namespace lorasc
