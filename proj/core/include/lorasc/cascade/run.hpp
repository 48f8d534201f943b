#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lorasc/adapter/lora.hpp"
#include "lorasc/data/dataset.hpp"
#include "lorasc/eval/metrics.hpp"
#include "lorasc/model/backbone.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/optim/adamw.hpp"
#include "lorasc/optim/schedule.hpp"

namespace lorasc {

// vanilla: one LoRA pair over the whole schedule, merged once at the end.
// cascade: merge every expert (alpha = 0, lambda = 0).
// slow:    cascade with the slow-fast EMA (lambda = 0).
// full:    slow-fast EMA plus noisy tuning.
enum class Ladder { Vanilla, Cascade, Slow, Full };
enum class Baseline { None, Cola };

std::string_view to_string(Ladder ladder) noexcept;
Ladder parse_ladder(std::string_view text);
std::string_view to_string(Baseline baseline) noexcept;
Baseline parse_baseline(std::string_view text);

struct CascadeConfig {
    double alpha = 0.5;
    double lambda = 0.1;
    std::size_t epochs = 5;
    std::size_t steps_per_expert = 0;  // 0: one expert per data epoch
    std::size_t batch_size = 4;
    std::size_t rank = 8;
    double lora_alpha = 0.0;  // <= 0: equal to rank
    Ladder ladder = Ladder::Full;
    Baseline baseline = Baseline::None;
    bool discard_noise = false;
    LrPolicy lr_policy;
    double lr_multiplier = 1.0;  // applied to cascading runs only
    Schedule schedule;           // total_steps is derived from the data
    AdamWConfig adamw;
    std::vector<std::string> targets;  // empty: the backbone's default targets
    std::uint64_t seed = 0;
    std::string run_id = "run";

    // Throws ConfigError naming the field.
    void validate() const;

    double effective_alpha() const noexcept;
    double effective_lambda() const noexcept;
};

enum class RunKind { Lorasc, Cola, Vanilla };
RunKind run_kind(const CascadeConfig& config) noexcept;

// Everything a run trains and evaluates on. `extra_eval` holds labelled
// datasets (usually corrupted copies of test) evaluated at the end.
struct RunData {
    Dataset train;
    Dataset val;
    Dataset test;
    std::vector<std::pair<std::string, Dataset>> extra_eval;
};

// Running sums per target, in double, of the noise left in W and of every
// merged delta. W = W0 + noise_sum + slow_sum up to accumulation error.
struct Ledger {
    std::vector<MatrixD> noise_sum;
    std::vector<MatrixD> slow_sum;
    std::vector<double> last_sigma;
    std::size_t noise_events = 0;

    bool operator==(const Ledger&) const = default;
};

template <typename T>
struct RunState {
    CascadeConfig config;
    RunKind kind = RunKind::Lorasc;
    std::vector<std::string> targets;

    std::size_t steps_per_epoch = 0;
    std::size_t total_steps = 0;
    std::vector<std::size_t> expert_steps;

    std::size_t expert_index = 0;  // experts fully merged so far
    std::size_t global_step = 0;
    std::size_t local_step = 0;
    bool expert_active = false;
    bool finished = false;

    Backbone<T> backbone;
    Backbone<T> initial;
    ExpertState<T> expert;
    AdamWState<T> optimizer;
    Schedule schedule;  // the active expert's schedule
    Rng init_rng;
    Rng noise_rng;
    Ledger ledger;
    std::vector<Matrix<T>> clean;  // pre-noise targets while discard_noise holds them

    std::vector<MetricsRecord> metrics;
    std::vector<std::string> trace;  // "<expert>:<stage>"
    std::vector<double> audit;       // telescoping residual after each merge
};

template <typename T>
using RunReport = RunState<T>;

// Number of data epochs completed by `state`.
template <typename T>
std::size_t completed_epochs(const RunState<T>& state) noexcept {
    return state.steps_per_epoch == 0 ? 0 : state.global_step / state.steps_per_epoch;
}

// Initial state: slow pairs drawn, nothing trained. Validates the config
// against the backbone and data.
template <typename T>
RunState<T> start_run(const CascadeConfig& config, Backbone<T> backbone, const RunData& data);

// Runs until the schedule finishes (returns true) or until `stop_after_epoch`
// data epochs are complete (returns false). 0 means run to the end.
template <typename T>
bool advance(RunState<T>& state, const RunData& data, std::size_t stop_after_epoch = 0);

// U(-lambda/2, lambda/2) * sigma, every element strictly inside the open
// interval (rounding onto an endpoint is pulled back inward).
template <typename T>
Matrix<T> sample_noise(std::size_t rows, std::size_t cols, double sigma, double lambda, Rng& rng);

// W~ = W + U(-lambda/2, lambda/2) * std(s B_slow A_slow), per target.
template <typename T>
void apply_noise(RunState<T>& state);

// `steps` optimizer steps on the fast pairs against the current backbone.
template <typename T>
void train_fast_expert(RunState<T>& state, const RunData& data, std::size_t steps);

// slow <- EMA(slow, fast, alpha); backbone += delta(slow).
template <typename T>
void merge_slow(RunState<T>& state);

// Max over targets of |W - (W0 + noise_sum + slow_sum)|.
template <typename T>
double telescoping_residual(const RunState<T>& state);

// Training-set row indices for global step `step`; a pure function of
// (seed, step) through the per-epoch shuffle.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n_train, std::size_t batch_size,
                                       std::size_t step);

template <typename T>
RunReport<T> run(const CascadeConfig& config, Backbone<T> backbone, const RunData& data);

template <typename T>
RunReport<T> run_vanilla_lora(const CascadeConfig& config, Backbone<T> backbone, const RunData& data);

template <typename T>
RunReport<T> run_cola(const CascadeConfig& config, Backbone<T> backbone, const RunData& data);

}  // namespace lorasc
