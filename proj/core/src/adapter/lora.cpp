#include "lorasc/adapter/lora.hpp"

#include <algorithm>
#include <cmath>

#include "lorasc/errors.hpp"

namespace lorasc {

namespace {

template <typename T>
void check_conform(const LoraPair<T>& p, const char* what) {
    if (p.a.rows() != p.rank || p.b.cols() != p.rank) {
        throw ShapeError(std::string(what) + " '" + p.target + "': B " + shape_string(p.b) + " and A " +
                         shape_string(p.a) + " do not share rank " + std::to_string(p.rank));
    }
}

template <typename T>
void check_same_shape(const LoraPair<T>& x, const LoraPair<T>& y, const char* what) {
    if (!x.a.same_shape(y.a) || !x.b.same_shape(y.b) || x.rank != y.rank) {
        throw ShapeError(std::string(what) + " '" + x.target + "': A " + shape_string(x.a) + " vs " +
                         shape_string(y.a) + ", B " + shape_string(x.b) + " vs " + shape_string(y.b));
    }
}

template <typename T>
Matrix<T> blend(const Matrix<T>& slow, const Matrix<T>& fast, double alpha) {
    Matrix<T> out(slow.rows(), slow.cols());
    const long double a = alpha, c = 1.0L - a;
    auto s = slow.values();
    auto f = fast.values();
    auto o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<T>(a * static_cast<long double>(s[i]) + c * static_cast<long double>(f[i]));
    }
    return out;
}

}  // namespace

double lora_scaling(double lora_alpha, std::size_t rank) {
    if (rank == 0) {
        throw ArgumentError("lora_scaling: rank must be positive");
    }
    return lora_alpha <= 0.0 ? 1.0 : lora_alpha / static_cast<double>(rank);
}

template <typename T>
LoraPair<T> init_pair(const std::string& target, std::size_t d, std::size_t k, std::size_t r, T scaling,
                      Rng& rng) {
    if (r < 1 || r > std::min(d, k)) {
        throw ArgumentError("init_pair '" + target + "': rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(std::min(d, k)) + "] for a " + std::to_string(d) + "x" +
                            std::to_string(k) + " target");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    LoraPair<T> p;
    p.target = target;
    p.a = sample_uniform<T>(r, k, -bound, bound, rng);
    p.b = Matrix<T>(d, r);
    p.rank = r;
    p.scaling = scaling;
    return p;
}

template <typename T>
Matrix<T> delta(const LoraPair<T>& pair) {
    check_conform(pair, "delta");
    Matrix<T> out = matmul(pair.b, pair.a);
    if (pair.scaling != T{1}) {
        out *= pair.scaling;
    }
    return out;
}

template <typename T>
MatrixD delta_f64(const LoraPair<T>& pair) {
    check_conform(pair, "delta");
    MatrixD out = matmul(pair.b.template cast<double>(), pair.a.template cast<double>());
    if (pair.scaling != T{1}) {
        out *= static_cast<double>(pair.scaling);
    }
    return out;
}

template <typename T>
void merge_into(Backbone<T>& backbone, const LoraPair<T>& pair) {
    const auto& w = backbone.at(pair.target);
    if (w.rows() != pair.d() || w.cols() != pair.k()) {
        throw ShapeError("merge_into '" + pair.target + "': delta " + std::to_string(pair.d()) + "x" +
                         std::to_string(pair.k()) + " does not match " + shape_string(w));
    }
    backbone.add_to(pair.target, delta(pair));
}

template <typename T>
LoraPair<T> ema_update(const LoraPair<T>& slow, const LoraPair<T>& fast, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ArgumentError("ema_update: alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    check_same_shape(slow, fast, "ema_update");
    if (slow.scaling != fast.scaling) {
        throw ShapeError("ema_update '" + slow.target + "': slow and fast scaling differ");
    }
    if (alpha == 1.0) {
        return slow;
    }
    LoraPair<T> out = slow;
    if (alpha == 0.0) {
        out.a = fast.a;
        out.b = fast.b;
        return out;
    }
    out.a = blend(slow.a, fast.a, alpha);
    out.b = blend(slow.b, fast.b, alpha);
    return out;
}

template <typename T>
ExpertState<T> init_expert(const Backbone<T>& backbone, std::span<const std::string> targets, std::size_t rank,
                           T scaling, Rng& rng) {
    ExpertState<T> e;
    for (const auto& t : targets) {
        const auto& w = backbone.at(t);
        e.slow.push_back(init_pair<T>(t, w.rows(), w.cols(), rank, scaling, rng));
    }
    e.fast = e.slow;
    e.epoch = 1;
    return e;
}

template <typename T>
void reinit_fast(ExpertState<T>& expert, Rng& rng) {
    if (expert.epoch < 2) {
        throw ContractError("reinit_fast: epoch 1 trains the clone of the slow pairs");
    }
    for (auto& f : expert.fast) {
        f = init_pair<T>(f.target, f.d(), f.k(), f.rank, f.scaling, rng);
    }
}

template <typename T>
std::vector<ParamTag> factor_tags(std::span<const LoraPair<T>> pairs) {
    std::vector<ParamTag> tags;
    for (const auto& p : pairs) {
        tags.push_back(ParamTag{p.target + ".lora_A", p.a.rows(), p.a.cols(), false});
        tags.push_back(ParamTag{p.target + ".lora_B", p.b.rows(), p.b.cols(), true});
    }
    return tags;
}

template <typename T>
double factor_norm(std::span<const LoraPair<T>> pairs) {
    double s = 0.0;
    for (const auto& p : pairs) {
        const double na = frobenius_norm(p.a), nb = frobenius_norm(p.b);
        s += na * na + nb * nb;
    }
    return std::sqrt(s);
}

#define LORASC_INSTANTIATE(T)                                                                              \
    template LoraPair<T> init_pair(const std::string&, std::size_t, std::size_t, std::size_t, T, Rng&);     \
    template Matrix<T> delta(const LoraPair<T>&);                                                          \
    template MatrixD delta_f64(const LoraPair<T>&);                                                        \
    template void merge_into(Backbone<T>&, const LoraPair<T>&);                                            \
    template LoraPair<T> ema_update(const LoraPair<T>&, const LoraPair<T>&, double);                       \
    template ExpertState<T> init_expert(const Backbone<T>&, std::span<const std::string>, std::size_t, T,  \
                                        Rng&);                                                             \
    template void reinit_fast(ExpertState<T>&, Rng&);                                                      \
    template std::vector<ParamTag> factor_tags(std::span<const LoraPair<T>>);                              \
    template double factor_norm(std::span<const LoraPair<T>>);

LORASC_INSTANTIATE(float)
LORASC_INSTANTIATE(double)

#undef LORASC_INSTANTIATE

}  // namespace lorasc
