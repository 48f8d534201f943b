#include "lorasc/optim/adamw.hpp"

#include <cmath>

#include "lorasc/errors.hpp"

namespace lorasc {

void LrPolicy::validate() const {
    if (!(b_multiplier >= 1.0) || !std::isfinite(b_multiplier)) {
        throw ConfigError("LrPolicy: B-matrix learning-rate multiplier must be >= 1, got " +
                          std::to_string(b_multiplier));
    }
}

template <typename T>
AdamWState<T> reinit_optimizer(std::span<const ParamTag> params, const LrPolicy& policy,
                               const AdamWConfig& config) {
    if (params.empty()) {
        throw ContractError("reinit_optimizer: empty parameter set");
    }
    policy.validate();
    AdamWState<T> s;
    s.config = config;
    for (const auto& p : params) {
        s.names.push_back(p.name);
        s.m.emplace_back(p.rows, p.cols);
        s.v.emplace_back(p.rows, p.cols);
        s.lr_scale.push_back(p.is_b_factor ? policy.b_multiplier : 1.0);
    }
    return s;
}

template <typename T>
void adamw_step(AdamWState<T>& state, std::span<Matrix<T>* const> params,
                std::span<const Matrix<T>> grads, double lr) {
    if (params.size() != state.m.size() || grads.size() != state.m.size()) {
        throw ShapeError("adamw_step: optimizer tracks " + std::to_string(state.m.size()) +
                         " tensors, got " + std::to_string(params.size()) + " params and " +
                         std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!params[i]->same_shape(state.m[i]) || !grads[i].same_shape(state.m[i])) {
            throw ShapeError("adamw_step: shape mismatch for '" + state.names[i] + "'");
        }
        if (!all_finite(grads[i])) {
            throw NumericError("adamw_step: non-finite gradient for parameter '" + state.names[i] + "'");
        }
    }
    const auto& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const double lr_i = lr * state.lr_scale[i];
        auto p = params[i]->values();
        auto g = grads[i].values();
        auto m = state.m[i].values();
        auto v = state.v[i].values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
            const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            const double pj = static_cast<double>(p[j]);
            p[j] = static_cast<T>(pj - lr_i * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * pj));
        }
        check_finite(*params[i], "adamw_step(" + state.names[i] + ")");
    }
}

template AdamWState<float> reinit_optimizer<float>(std::span<const ParamTag>, const LrPolicy&, const AdamWConfig&);
template AdamWState<double> reinit_optimizer<double>(std::span<const ParamTag>, const LrPolicy&, const AdamWConfig&);
template void adamw_step<float>(AdamWState<float>&, std::span<Matrix<float>* const>, std::span<const Matrix<float>>, double);
template void adamw_step<double>(AdamWState<double>&, std::span<Matrix<double>* const>, std::span<const Matrix<double>>, double);

}  // namespace lorasc
