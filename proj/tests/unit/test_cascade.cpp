#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fixtures.hpp"
#include "lorasc/cascade/run.hpp"
#include "lorasc/errors.hpp"
#include "lorasc/eval/metrics.hpp"
#include "lorasc/numkit/svd.hpp"
#include "oracles.hpp"

using namespace lorasc;

namespace {

RunData small_data() { return fixture::teacher(64, 16, 32, 8, 3, 1); }

template <typename T>
Backbone<T> small_backbone() {
    return build<T>(fixture::mlp());
}

std::vector<std::string> stages_of(const std::vector<std::string>& trace) {
    std::vector<std::string> out;
    for (const auto& t : trace) out.push_back(t.substr(t.find(':') + 1));
    return out;
}

}  // namespace

TEST(Config, ValidationNamesField) {
    auto c = fixture::cascade();
    c.alpha = 1.2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = fixture::cascade();
    c.lambda = -1;
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("lambda"), std::string::npos);
    }
    c = fixture::cascade();
    c.ladder = Ladder::Vanilla;
    c.baseline = Baseline::Cola;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, EffectiveKnobsFollowLadder) {
    auto c = fixture::cascade();
    c.alpha = 0.6;
    c.lambda = 1.0;
    c.ladder = Ladder::Cascade;
    EXPECT_EQ(c.effective_alpha(), 0.0);
    EXPECT_EQ(c.effective_lambda(), 0.0);
    c.ladder = Ladder::Slow;
    EXPECT_EQ(c.effective_alpha(), 0.6);
    EXPECT_EQ(c.effective_lambda(), 0.0);
    c.ladder = Ladder::Full;
    EXPECT_EQ(c.effective_lambda(), 1.0);
    c.baseline = Baseline::Cola;
    EXPECT_EQ(c.effective_alpha(), 0.0);
    EXPECT_EQ(c.effective_lambda(), 0.0);
    EXPECT_EQ(parse_ladder("slow"), Ladder::Slow);
    EXPECT_THROW(parse_ladder("turbo"), ConfigError);
}

TEST(BatchIndices, DeterministicPermutationPerEpoch) {
    std::multiset<std::size_t> seen;
    for (std::size_t step = 0; step < 4; ++step)
        for (auto i : batch_indices(3, 30, 8, step)) seen.insert(i);
    EXPECT_EQ(seen.size(), 30u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 30u);
    EXPECT_EQ(batch_indices(3, 30, 8, 5), batch_indices(3, 30, 8, 5));
    EXPECT_NE(batch_indices(3, 30, 8, 0), batch_indices(3, 30, 8, 4));
    EXPECT_EQ(batch_indices(3, 30, 8, 3).size(), 6u);
}

TEST(SampleNoise, StrictlyInsideAndUniformMoments) {
    Rng rng(1, 3);
    auto n = sample_noise<double>(400, 250, 1.0, 1.0, rng);
    for (double v : n.values()) ASSERT_TRUE(v > -0.5 && v < 0.5);
    EXPECT_NEAR(oracle::two_pass_std(n), 1.0 / std::sqrt(12.0), 0.01);
    Rng r2(1, 3);
    EXPECT_THROW(sample_noise<double>(2, 2, 1.0, -1.0, r2), ArgumentError);
}

TEST(SampleNoise, FloatEndpointsPulledInward) {
    Rng rng(2, 3);
    auto n = sample_noise<float>(1000, 1000, 1e-3, 10.0, rng);
    for (float v : n.values()) ASSERT_TRUE(v > -5e-3f && v < 5e-3f);
}

TEST(ApplyNoise, EpochOneIsExactlyZero) {
    auto data = small_data();
    auto c = fixture::cascade();
    c.lambda = 10.0;
    auto s = start_run(c, small_backbone<float>(), data);
    auto before = s.backbone;
    apply_noise(s);
    EXPECT_TRUE(bit_equal(s.backbone, before));
    for (double sigma : s.ledger.last_sigma) EXPECT_EQ(sigma, 0.0);
}

TEST(ApplyNoise, LambdaZeroNeverTouchesBackbone) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    c.lambda = 0.0;
    auto r = run(c, small_backbone<float>(), data);
    for (const auto& m : r.ledger.noise_sum) EXPECT_EQ(max_abs(m), 0.0);
    EXPECT_EQ(r.ledger.noise_events, 3u);
}

TEST(ApplyNoise, PerTargetScaleAndOnlyTargets) {
    auto data = small_data();
    auto c = fixture::cascade();
    c.lambda = 1.0;
    auto s = start_run(c, small_backbone<double>(), data);
    Rng rng(5);
    for (auto& p : s.expert.slow) p.b = sample_uniform<double>(p.b.rows(), p.b.cols(), -1, 1, rng);
    auto before = s.backbone;
    apply_noise(s);
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        const double sigma = std_all(delta(s.expert.slow[i]));
        EXPECT_DOUBLE_EQ(s.ledger.last_sigma[i], sigma);
        auto n = sub(s.backbone.at(s.targets[i]), before.at(s.targets[i]));
        EXPECT_GT(max_abs(n), 0.0);
        EXPECT_LT(max_abs(n), 0.5 * sigma);
        EXPECT_LT(max_abs_diff(n, s.ledger.noise_sum[i]), 1e-15);
    }
    for (const auto& [name, m] : before.params())
        if (std::find(s.targets.begin(), s.targets.end(), name) == s.targets.end())
            EXPECT_TRUE(bit_equal(m, s.backbone.at(name))) << name;
}

TEST(TrainFast, ZeroStepsIsNoOpAndLossDrops) {
    auto data = small_data();
    auto c = fixture::cascade(2);
    c.lambda = 0;
    auto s = start_run(c, small_backbone<float>(), data);
    advance(s, data, 0);
    // a finished run: per-expert loss at the last step is below the first
    double first = 0, last = 0;
    for (const auto& r : s.metrics) {
        if (r.split != "train") continue;
        if (r.step == 0) first = r.loss;
        last = r.loss;
    }
    EXPECT_LT(last, first);
}

TEST(TrainFast, OnlyFastFactorsMove) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    auto s = start_run(c, small_backbone<float>(), data);
    advance(s, data, 1);
    // begin expert 2 by hand: reinit, noise, optimizer, then train
    ASSERT_FALSE(s.expert_active);
    s.expert_index = 1;
    s.expert_active = true;
    s.local_step = 0;
    s.expert.epoch = 2;
    reinit_fast(s.expert, s.init_rng);
    apply_noise(s);
    s.optimizer = reinit_optimizer<float>(factor_tags(std::span<const LoraPair<float>>(s.expert.fast)),
                                          c.lr_policy, c.adamw);
    s.schedule = compressed_schedule(Schedule{c.schedule.kind, 5e-3, 0, 30}, s.expert_steps[1]);
    auto bb = s.backbone.checksum();
    auto slow = s.expert.slow;
    auto fast = s.expert.fast;
    train_fast_expert(s, data, 0);
    EXPECT_EQ(s.expert.fast, fast);
    train_fast_expert(s, data, 3);
    EXPECT_EQ(s.backbone.checksum(), bb);
    EXPECT_EQ(s.expert.slow, slow);
    EXPECT_NE(s.expert.fast, fast);
}

TEST(TrainFast, InactiveExpertIsContractError) {
    auto data = small_data();
    auto s = start_run(fixture::cascade(), small_backbone<float>(), data);
    EXPECT_THROW(train_fast_expert(s, data, 1), ContractError);
}

TEST(MergeSlow, AlphaZeroMergesFastExactly) {
    auto data = small_data();
    auto c = fixture::cascade();
    c.alpha = 0;
    auto s = start_run(c, small_backbone<double>(), data);
    Rng rng(3);
    for (auto& p : s.expert.fast) p.b = sample_uniform<double>(p.b.rows(), p.b.cols(), -1, 1, rng);
    auto before = s.backbone;
    merge_slow(s);
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        EXPECT_EQ(s.expert.slow[i], s.expert.fast[i]);
        auto want = add(before.at(s.targets[i]), delta(s.expert.fast[i]));
        EXPECT_TRUE(bit_equal(s.backbone.at(s.targets[i]), want));
    }
    EXPECT_LT(telescoping_residual(s), 1e-12);
}

TEST(Run, AlphaOneLambdaZeroLeavesModelUnchanged) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    c.alpha = 1.0;
    c.lambda = 0.0;
    auto bb = small_backbone<float>();
    auto r = run(c, bb, data);
    EXPECT_TRUE(bit_equal(r.backbone, bb));
}

TEST(Run, StageOrderFollowsTheAlgorithm) {
    auto data = small_data();
    auto r = run(fixture::cascade(3), small_backbone<float>(), data);
    std::vector<std::string> want = {"0:init_slow",
                                     "1:apply_noise", "1:reinit_optimizer", "1:train_fast", "1:ema", "1:merge",
                                     "2:reinit_fast", "2:apply_noise", "2:reinit_optimizer", "2:train_fast", "2:ema", "2:merge",
                                     "3:reinit_fast", "3:apply_noise", "3:reinit_optimizer", "3:train_fast", "3:ema", "3:merge"};
    EXPECT_EQ(r.trace, want);
}

TEST(Run, CascadeTraceIsStrictSubsetOfFull) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    auto full = stages_of(run(c, small_backbone<float>(), data).trace);
    c.ladder = Ladder::Cascade;
    auto cas = stages_of(run(c, small_backbone<float>(), data).trace);
    std::set<std::string> fs(full.begin(), full.end()), cs(cas.begin(), cas.end());
    EXPECT_TRUE(std::includes(fs.begin(), fs.end(), cs.begin(), cs.end()));
    EXPECT_LT(cs.size(), fs.size());
    EXPECT_EQ(fs.count("apply_noise"), 1u);
    EXPECT_EQ(cs.count("apply_noise"), 0u);
}

TEST(Run, TelescopingHoldsAfterEveryMergeAtEveryLevel) {
    auto data = small_data();
    for (auto level : {Ladder::Cascade, Ladder::Slow, Ladder::Full}) {
        auto c = fixture::cascade(4);
        c.ladder = level;
        c.lambda = 1.0;
        auto r = run(c, small_backbone<float>(), data);
        ASSERT_EQ(r.audit.size(), 4u);
        for (double a : r.audit) EXPECT_LT(a, 1e-4) << to_string(level);
    }
}

TEST(Run, DiscardNoiseKeepsOnlySlowDeltas) {
    auto data = small_data();
    auto c = fixture::cascade(4);
    c.lambda = 10.0;
    auto kept = run(c, small_backbone<double>(), data);
    c.discard_noise = true;
    auto dropped = run(c, small_backbone<double>(), data);
    double noise = 0;
    for (const auto& m : kept.ledger.noise_sum) noise = std::max(noise, max_abs(m));
    EXPECT_GT(noise, 0.0);
    for (std::size_t i = 0; i < dropped.targets.size(); ++i) {
        EXPECT_EQ(max_abs(dropped.ledger.noise_sum[i]), 0.0);
        auto w = sub(dropped.backbone.at(dropped.targets[i]), dropped.initial.at(dropped.targets[i]));
        EXPECT_LT(max_abs_diff(w, dropped.ledger.slow_sum[i]), 1e-12);
    }
    EXPECT_LT(telescoping_residual(kept), 1e-12);
}

TEST(Run, VanillaEqualsSingleExpertCascade) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    auto vanilla = run_vanilla_lora(c, small_backbone<float>(), data);
    c.alpha = 0;
    c.lambda = 0;
    c.steps_per_expert = vanilla.total_steps;
    auto one = run(c, small_backbone<float>(), data);
    EXPECT_TRUE(bit_equal(vanilla.backbone, one.backbone));
}

TEST(Run, PerEpochZeroKnobsEqualsCola) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    auto cola = run_cola(c, small_backbone<float>(), data);
    c.alpha = 0;
    c.lambda = 0;
    auto lorasc = run(c, small_backbone<float>(), data);
    EXPECT_TRUE(bit_equal(cola.backbone, lorasc.backbone));
    EXPECT_EQ(cola.audit.size(), 3u);
}

TEST(Run, RankGrowsAcrossExperts) {
    auto data = fixture::teacher(64, 16, 16, 8, 8, 3);
    ModelConfig mc = fixture::mlp(16, 8, 8);
    auto c = fixture::cascade(5, 1);
    c.lambda = 1.0;
    auto r = run(c, build<double>(mc), data);
    for (std::size_t i = 0; i < r.targets.size(); ++i) {
        auto rep = effective_rank(r.ledger.slow_sum[i], 1e-6);
        EXPECT_GT(rep.rank, 1u);
        EXPECT_LE(rep.rank, 5u);
    }
}

TEST(Run, ExpertLayoutAbsorbsRemainder) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    c.steps_per_expert = 5;
    auto s = start_run(c, small_backbone<float>(), data);
    EXPECT_EQ(s.total_steps, 24u);
    EXPECT_EQ(s.expert_steps, (std::vector<std::size_t>{5, 5, 5, 9}));
    c.steps_per_expert = 25;
    EXPECT_THROW(start_run(c, small_backbone<float>(), data), ConfigError);
}

TEST(Run, VanillaWithZeroLrIsIdentity) {
    auto data = small_data();
    auto c = fixture::cascade(2);
    c.schedule.lr_start = 0;
    auto bb = small_backbone<float>();
    EXPECT_TRUE(bit_equal(run_vanilla_lora(c, bb, data).backbone, bb));
}

TEST(Run, MergedEvalMatchesAdapterEval) {
    auto data = small_data();
    auto c = fixture::cascade(2);
    auto bb = small_backbone<float>();
    auto r = run_vanilla_lora(c, bb, data);
    auto adapter = evaluate(bb, std::span<const LoraPair<float>>(r.expert.fast), data.test, "test");
    auto merged = evaluate(r.backbone, std::span<const LoraPair<float>>(), data.test, "test");
    EXPECT_NEAR(adapter.loss, merged.loss, 1e-5);
}

TEST(Run, ReplayIsIdenticalAndResumable) {
    auto data = small_data();
    auto c = fixture::cascade(4);
    auto a = run(c, small_backbone<float>(), data);
    auto b = run(c, small_backbone<float>(), data);
    EXPECT_EQ(a.metrics, b.metrics);
    auto s = start_run(c, small_backbone<float>(), data);
    EXPECT_FALSE(advance(s, data, 2));
    EXPECT_EQ(completed_epochs(s), 2u);
    auto copy = s;
    EXPECT_TRUE(advance(copy, data));
    EXPECT_EQ(copy.metrics, a.metrics);
    EXPECT_TRUE(bit_equal(copy.backbone, a.backbone));
}

TEST(Run, MetricsRowsHaveExpectedShape) {
    auto data = small_data();
    auto c = fixture::cascade(3);
    auto r = run(c, small_backbone<float>(), data);
    std::size_t train = 0, val = 0, test = 0;
    for (const auto& m : r.metrics) {
        train += m.split == "train";
        val += m.split == "val";
        test += m.split == "test";
        if (m.split == "train") EXPECT_EQ(m.noise_sigma.size(), r.targets.size());
    }
    EXPECT_EQ(train, r.total_steps);
    EXPECT_EQ(val, 3u);
    EXPECT_EQ(test, 1u);
    EXPECT_EQ(r.metrics.back().epoch, 3u);
}

TEST(Run, ModeMismatchIsConfigError) {
    auto seq = gen_sequence_task(1, 20, 5, 4, SequenceKind::Majority);
    RunData d{seq, {}, {}, {}};
    EXPECT_THROW(start_run(fixture::cascade(), small_backbone<float>(), d), ConfigError);
}
