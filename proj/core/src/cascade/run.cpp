#include "lorasc/cascade/run.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorasc/errors.hpp"
#include "lorasc/model/forward.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

std::string_view to_string(Ladder ladder) noexcept {
    switch (ladder) {
    case Ladder::Vanilla: return "vanilla";
    case Ladder::Cascade: return "cascade";
    case Ladder::Slow: return "slow";
    case Ladder::Full: return "full";
    }
    return "full";
}

Ladder parse_ladder(std::string_view text) {
    if (text == "vanilla") return Ladder::Vanilla;
    if (text == "cascade") return Ladder::Cascade;
    if (text == "slow") return Ladder::Slow;
    if (text == "full") return Ladder::Full;
    throw ConfigError("cascade.ladder: unknown level '" + std::string(text) +
                      "' (expected vanilla, cascade, slow or full)");
}

std::string_view to_string(Baseline baseline) noexcept {
    return baseline == Baseline::Cola ? "cola" : "none";
}

Baseline parse_baseline(std::string_view text) {
    if (text == "none") return Baseline::None;
    if (text == "cola") return Baseline::Cola;
    throw ConfigError("cascade.baseline: unknown baseline '" + std::string(text) + "' (expected none or cola)");
}

void CascadeConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("cascade." + field + ": " + why);
    };
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha", "must lie in [0, 1], got " + std::to_string(alpha));
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda", "must be finite and >= 0");
    if (epochs == 0) fail("epochs", "must be positive");
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (rank == 0) fail("rank", "must be positive");
    if (!(lr_multiplier > 0.0) || !std::isfinite(lr_multiplier)) fail("lr_multiplier", "must be positive");
    if (!(schedule.lr_start >= 0.0) || !std::isfinite(schedule.lr_start)) fail("lr", "must be finite and >= 0");
    if (!(schedule.lr_end >= 0.0) || !std::isfinite(schedule.lr_end)) fail("lr_end", "must be finite and >= 0");
    if (baseline == Baseline::Cola && ladder == Ladder::Vanilla) {
        fail("baseline", "cola is a cascading baseline and cannot run with ladder=vanilla");
    }
    lr_policy.validate();
}

double CascadeConfig::effective_alpha() const noexcept {
    if (baseline == Baseline::Cola) return 0.0;
    return ladder == Ladder::Slow || ladder == Ladder::Full ? alpha : 0.0;
}

double CascadeConfig::effective_lambda() const noexcept {
    return baseline == Baseline::None && ladder == Ladder::Full ? lambda : 0.0;
}

RunKind run_kind(const CascadeConfig& config) noexcept {
    if (config.ladder == Ladder::Vanilla) return RunKind::Vanilla;
    return config.baseline == Baseline::Cola ? RunKind::Cola : RunKind::Lorasc;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n_train, std::size_t batch_size,
                                       std::size_t step) {
    if (n_train == 0 || batch_size == 0) {
        throw ArgumentError("batch_indices: empty training set or batch size");
    }
    const std::size_t spe = (n_train + batch_size - 1) / batch_size;
    const std::size_t epoch = step / spe, j = step % spe;

    struct Cache {
        std::uint64_t seed = 0;
        std::size_t n = 0;
        std::size_t epoch = 0;
        std::vector<std::size_t> perm;
    };
    thread_local Cache cache;
    if (cache.perm.empty() || cache.seed != seed || cache.n != n_train || cache.epoch != epoch) {
        cache.seed = seed;
        cache.n = n_train;
        cache.epoch = epoch;
        cache.perm.resize(n_train);
        std::iota(cache.perm.begin(), cache.perm.end(), std::size_t{0});
        Rng rng(seed, streams::kShuffleBase + epoch);
        for (std::size_t i = n_train; i > 1; --i) {
            std::swap(cache.perm[i - 1], cache.perm[rng.below(i)]);
        }
    }
    const std::size_t begin = j * batch_size, end = std::min(begin + batch_size, n_train);
    return {cache.perm.begin() + static_cast<std::ptrdiff_t>(begin),
            cache.perm.begin() + static_cast<std::ptrdiff_t>(end)};
}

template <typename T>
Matrix<T> sample_noise(std::size_t rows, std::size_t cols, double sigma, double lambda, Rng& rng) {
    if (!(lambda >= 0.0)) {
        throw ArgumentError("apply_noise: lambda " + std::to_string(lambda) + " must be >= 0");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw NumericError("apply_noise: noise scale is not finite");
    }
    Matrix<T> out(rows, cols);
    const double half = 0.5 * lambda;
    const double bound = half * sigma;
    if (bound == 0.0) {
        return out;
    }
    const MatrixD u = sample_uniform<double>(rows, cols, -half, half, rng);
    auto o = out.values();
    auto uv = u.values();
    // Largest T strictly inside the bound.
    T inner = static_cast<T>(bound);
    while (static_cast<double>(inner) >= bound) {
        inner = std::nextafter(inner, T{0});
    }
    for (std::size_t i = 0; i < o.size(); ++i) {
        T v = static_cast<T>(uv[i] * sigma);
        if (static_cast<double>(v) >= bound) v = inner;
        if (static_cast<double>(v) <= -bound) v = -inner;
        o[i] = v;
    }
    return out;
}

namespace {

template <typename T>
void stage(RunState<T>& s, const char* name) {
    s.trace.push_back(std::to_string(s.expert_index + 1) + ":" + name);
}

template <typename T>
bool noise_stage(const RunState<T>& s) {
    return s.kind == RunKind::Lorasc && s.config.ladder == Ladder::Full;
}

template <typename T>
MetricsRecord annotate(const RunState<T>& s, MetricsRecord r, std::size_t epoch) {
    r.run_id = s.config.run_id;
    r.epoch = epoch;
    r.step = s.global_step;
    if (noise_stage(s)) {
        r.noise_sigma = s.ledger.last_sigma;
    }
    r.slow_norm = factor_norm(std::span<const LoraPair<T>>(s.expert.slow));
    r.fast_norm = factor_norm(std::span<const LoraPair<T>>(s.expert.fast));
    return r;
}

template <typename T>
std::vector<LoraPair<T>> fresh_pairs(RunState<T>& s) {
    std::vector<LoraPair<T>> out;
    const T scaling = static_cast<T>(lora_scaling(s.config.lora_alpha, s.config.rank));
    for (const auto& t : s.targets) {
        const auto& w = s.backbone.at(t);
        out.push_back(init_pair<T>(t, w.rows(), w.cols(), s.config.rank, scaling, s.init_rng));
    }
    return out;
}

template <typename T>
void begin_expert(RunState<T>& s) {
    if (s.kind == RunKind::Lorasc) {
        s.expert.epoch = s.expert_index + 1;
        if (s.expert_index > 0) {
            reinit_fast(s.expert, s.init_rng);
            stage(s, "reinit_fast");
        }
        if (noise_stage(s)) {
            apply_noise(s);
        }
    } else {
        s.expert.fast = fresh_pairs(s);
        s.expert.epoch = s.expert_index + 1;
        stage(s, "init_pair");
    }
    const auto tags = factor_tags(std::span<const LoraPair<T>>(s.expert.fast));
    s.optimizer = reinit_optimizer<T>(tags, s.config.lr_policy, s.config.adamw);
    stage(s, "reinit_optimizer");

    Schedule base = s.config.schedule;
    base.total_steps = s.total_steps;
    if (s.kind != RunKind::Vanilla) {
        base.lr_start *= s.config.lr_multiplier;
        base.lr_end *= s.config.lr_multiplier;
    }
    s.schedule = compressed_schedule(base, s.expert_steps[s.expert_index]);
    s.local_step = 0;
    s.expert_active = true;
}

template <typename T>
void train_step(RunState<T>& s, const RunData& data) {
    const auto idx = batch_indices(s.config.seed, data.train.size(), s.config.batch_size, s.global_step);
    const Dataset batch = data.train.subset(idx);
    const std::size_t epoch = s.global_step / s.steps_per_epoch + 1;
    auto context = [&] {
        return "expert " + std::to_string(s.expert_index + 1) + ", epoch " + std::to_string(epoch) + ", step " +
               std::to_string(s.global_step);
    };

    Tape<T> tape;
    Bindings<T> bind;
    std::vector<Matrix<T>*> ptrs;
    for (auto& p : s.expert.fast) {
        Var<T> a = tape.parameter(p.a);
        Var<T> b = tape.parameter(p.b);
        bind.adapters.emplace(p.target, AdapterBinding<T>{a, b, p.scaling});
        ptrs.push_back(&p.a);
        ptrs.push_back(&p.b);
    }
    const double lr = lr_at(s.schedule, s.local_step);
    double loss_value = 0.0;
    try {
        auto loss = task_loss(forward(s.backbone, tape, bind, batch.inputs), batch);
        loss_value = static_cast<double>(loss.value()(0, 0));
        if (!std::isfinite(loss_value)) {
            throw TrainingError("non-finite loss");
        }
        auto grads = tape.backward(loss);
        adamw_step<T>(s.optimizer, ptrs, grads, lr);
    } catch (const NumericError& e) {
        throw TrainingError(context() + ": " + e.what());
    } catch (const TrainingError& e) {
        throw TrainingError(context() + ": " + e.what());
    }

    MetricsRecord r;
    r.split = "train";
    r.loss = loss_value;
    r.lr = lr;
    s.metrics.push_back(annotate(s, std::move(r), epoch));
    s.local_step += 1;
    s.global_step += 1;
}

template <typename T>
void end_expert(RunState<T>& s) {
    if (s.kind == RunKind::Lorasc) {
        merge_slow(s);
    } else {
        for (std::size_t i = 0; i < s.targets.size(); ++i) {
            merge_into(s.backbone, s.expert.fast[i]);
            s.ledger.slow_sum[i] += delta_f64(s.expert.fast[i]);
        }
        stage(s, "merge");
    }
    s.audit.push_back(telescoping_residual(s));
    s.expert_index += 1;
    s.expert_active = false;
}

template <typename T>
void final_eval(RunState<T>& s, const RunData& data) {
    const std::span<const LoraPair<T>> none;
    auto add = [&](const Dataset& d, const std::string& split) {
        if (!d.empty()) {
            s.metrics.push_back(annotate(s, evaluate(s.backbone, none, d, split), s.config.epochs));
        }
    };
    add(data.val, "val");
    add(data.test, "test");
    for (const auto& [name, d] : data.extra_eval) {
        add(d, name);
    }
}

}  // namespace

template <typename T>
RunState<T> start_run(const CascadeConfig& config, Backbone<T> backbone, const RunData& data) {
    config.validate();
    if (data.train.empty()) {
        throw ConfigError("data: training split is empty");
    }
    const auto& mc = backbone.config();
    const bool seq_model = mc.mode == ModelMode::Transformer;
    if (seq_model != (data.train.kind == TaskKind::Sequence)) {
        throw ConfigError("data: " + std::string(to_string(data.train.kind)) + " task does not fit a " +
                          std::string(to_string(mc.mode)) + " model");
    }
    RunState<T> s;
    s.config = config;
    s.kind = run_kind(config);
    s.targets = config.targets.empty() ? backbone.default_targets() : config.targets;
    validate_targets(backbone, s.targets);

    s.steps_per_epoch = (data.train.size() + config.batch_size - 1) / config.batch_size;
    s.total_steps = config.epochs * s.steps_per_epoch;
    if (s.kind == RunKind::Vanilla) {
        s.expert_steps = {s.total_steps};
    } else {
        const std::size_t spx = config.steps_per_expert == 0 ? s.steps_per_epoch : config.steps_per_expert;
        if (spx > s.total_steps) {
            throw ConfigError("cascade.steps_per_expert: " + std::to_string(spx) + " exceeds the " +
                              std::to_string(s.total_steps) + " total steps");
        }
        const std::size_t n = s.total_steps / spx;
        s.expert_steps.assign(n, spx);
        s.expert_steps.back() += s.total_steps - n * spx;
    }

    s.init_rng = Rng(config.seed, streams::kAdapterInit);
    s.noise_rng = Rng(config.seed, streams::kNoise);
    s.initial = backbone;
    s.backbone = std::move(backbone);
    for (const auto& t : s.targets) {
        const auto& w = s.backbone.at(t);
        s.ledger.noise_sum.emplace_back(w.rows(), w.cols());
        s.ledger.slow_sum.emplace_back(w.rows(), w.cols());
    }
    s.ledger.last_sigma.assign(s.targets.size(), 0.0);
    if (s.kind == RunKind::Lorasc) {
        const T scaling = static_cast<T>(lora_scaling(config.lora_alpha, config.rank));
        s.expert = init_expert(s.backbone, std::span<const std::string>(s.targets), config.rank, scaling, s.init_rng);
        s.trace.push_back("0:init_slow");
    }
    return s;
}

template <typename T>
void apply_noise(RunState<T>& s) {
    if (s.config.lambda < 0.0) {
        throw ArgumentError("apply_noise: lambda " + std::to_string(s.config.lambda) + " must be >= 0");
    }
    if (s.expert.slow.size() != s.targets.size()) {
        throw ContractError("apply_noise: slow pairs missing for some targets");
    }
    const double lambda = s.config.effective_lambda();
    if (s.config.discard_noise) {
        s.clean.clear();
    }
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        const auto& slow = s.expert.slow[i];
        const double sigma = std_all(delta(slow));
        s.ledger.last_sigma[i] = sigma;
        if (s.config.discard_noise) {
            s.clean.push_back(s.backbone.at(slow.target));
        }
        if (lambda == 0.0 || sigma == 0.0) {
            continue;
        }
        const Matrix<T> noise = sample_noise<T>(slow.d(), slow.k(), sigma, lambda, s.noise_rng);
        s.backbone.add_to(slow.target, noise);
        if (!s.config.discard_noise) {
            s.ledger.noise_sum[i] += noise.template cast<double>();
        }
    }
    s.ledger.noise_events += 1;
    stage(s, "apply_noise");
}

template <typename T>
void train_fast_expert(RunState<T>& s, const RunData& data, std::size_t steps) {
    if (!s.expert_active) {
        throw ContractError("train_fast_expert: no expert is active");
    }
    const std::size_t budget = s.expert_steps[s.expert_index] - s.local_step;
    if (steps > 0 && s.local_step == 0) {
        stage(s, "train_fast");
    }
    for (std::size_t i = 0; i < std::min(steps, budget); ++i) {
        train_step(s, data);
    }
}

template <typename T>
void merge_slow(RunState<T>& s) {
    if (s.kind != RunKind::Lorasc) {
        throw ContractError("merge_slow: only cascading runs keep slow pairs");
    }
    const double alpha = s.config.effective_alpha();
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        s.expert.slow[i] = ema_update(s.expert.slow[i], s.expert.fast[i], alpha);
    }
    stage(s, "ema");
    if (s.config.discard_noise && !s.clean.empty()) {
        for (std::size_t i = 0; i < s.targets.size(); ++i) {
            s.backbone.assign(s.targets[i], s.clean[i]);
        }
        s.clean.clear();
    }
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        merge_into(s.backbone, s.expert.slow[i]);
        s.ledger.slow_sum[i] += delta_f64(s.expert.slow[i]);
    }
    stage(s, "merge");
}

template <typename T>
double telescoping_residual(const RunState<T>& s) {
    double worst = 0.0;
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        const auto& w = s.backbone.at(s.targets[i]).values();
        const auto& w0 = s.initial.at(s.targets[i]).values();
        const auto& n = s.ledger.noise_sum[i].values();
        const auto& d = s.ledger.slow_sum[i].values();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double r = static_cast<double>(w[j]) - (static_cast<double>(w0[j]) + n[j] + d[j]);
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

template <typename T>
bool advance(RunState<T>& s, const RunData& data, std::size_t stop_after_epoch) {
    while (!s.finished) {
        if (!s.expert_active) {
            begin_expert(s);
        }
        train_fast_expert(s, data, 1);
        if (s.local_step == s.expert_steps[s.expert_index]) {
            end_expert(s);
        }
        if (s.global_step % s.steps_per_epoch != 0) {
            continue;
        }
        const std::size_t epoch = s.global_step / s.steps_per_epoch;
        if (epoch == s.config.epochs) {
            final_eval(s, data);
            s.finished = true;
            break;
        }
        if (!data.val.empty()) {
            std::span<const LoraPair<T>> live;
            if (s.expert_active) {
                live = std::span<const LoraPair<T>>(s.expert.fast);
            }
            s.metrics.push_back(annotate(s, evaluate(s.backbone, live, data.val, "val"), epoch));
        }
        if (stop_after_epoch != 0 && epoch >= stop_after_epoch) {
            return false;
        }
    }
    return true;
}

template <typename T>
RunReport<T> run(const CascadeConfig& config, Backbone<T> backbone, const RunData& data) {
    RunState<T> s = start_run(config, std::move(backbone), data);
    advance(s, data);
    return s;
}

template <typename T>
RunReport<T> run_vanilla_lora(const CascadeConfig& config, Backbone<T> backbone, const RunData& data) {
    CascadeConfig c = config;
    c.ladder = Ladder::Vanilla;
    c.baseline = Baseline::None;
    return run(c, std::move(backbone), data);
}

template <typename T>
RunReport<T> run_cola(const CascadeConfig& config, Backbone<T> backbone, const RunData& data) {
    CascadeConfig c = config;
    c.baseline = Baseline::Cola;
    if (c.ladder == Ladder::Vanilla) {
        c.ladder = Ladder::Cascade;
    }
    return run(c, std::move(backbone), data);
}

#define LORASC_INSTANTIATE(T)                                                                         \
    template Matrix<T> sample_noise<T>(std::size_t, std::size_t, double, double, Rng&);               \
    template RunState<T> start_run(const CascadeConfig&, Backbone<T>, const RunData&);                \
    template bool advance(RunState<T>&, const RunData&, std::size_t);                                 \
    template void apply_noise(RunState<T>&);                                                          \
    template void train_fast_expert(RunState<T>&, const RunData&, std::size_t);                       \
    template void merge_slow(RunState<T>&);                                                           \
    template double telescoping_residual(const RunState<T>&);                                         \
    template RunReport<T> run(const CascadeConfig&, Backbone<T>, const RunData&);                     \
    template RunReport<T> run_vanilla_lora(const CascadeConfig&, Backbone<T>, const RunData&);        \
    template RunReport<T> run_cola(const CascadeConfig&, Backbone<T>, const RunData&);

LORASC_INSTANTIATE(float)
LORASC_INSTANTIATE(double)

#undef LORASC_INSTANTIATE

}  // namespace lorasc
