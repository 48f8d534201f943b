#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "lorasc/cascade/run.hpp"
#include "lorasc/model/forward.hpp"
#include "lorasc/numkit/svd.hpp"

using namespace lorasc;

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const auto a = sample_normal<float>(n, n, 1.0, rng);
    const auto b = sample_normal<float>(n, n, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

static void BM_SingularValues(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const auto m = sample_normal<double>(n, n, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(singular_values(m));
}
BENCHMARK(BM_SingularValues)->RangeMultiplier(2)->Range(8, 128)->Unit(benchmark::kMillisecond);

static void BM_ForwardBackward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const auto bb = build<float>(fixture::mlp(width, 16, 4));
    const auto data = fixture::teacher(64, 4, 4, 16, 4, 3);
    std::vector<LoraPair<float>> pairs;
    Rng rng(3);
    for (const auto& name : bb.default_targets()) {
        const auto& w = bb.at(name);
        pairs.push_back(init_pair<float>(name, w.rows(), w.cols(), 8, 8.0f, rng));
    }
    for (auto _ : state) {
        Tape<float> tape;
        Bindings<float> bind;
        for (const auto& p : pairs) {
            auto a = tape.parameter(p.a);
            auto b = tape.parameter(p.b);
            bind.adapters.emplace(p.target, AdapterBinding<float>{a, b, p.scaling});
        }
        benchmark::DoNotOptimize(tape.backward(task_loss(forward(bb, tape, bind, data.train.inputs), data.train)));
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128);

static void BM_CascadeEpoch(benchmark::State& state) {
    const auto data = fixture::teacher(256, 16, 16, 8, 3, 4);
    auto c = fixture::cascade(1, 8);
    c.alpha = 0.5;
    c.lambda = 0.1;
    const auto bb = build<float>(fixture::mlp(32));
    for (auto _ : state) benchmark::DoNotOptimize(run(c, bb, data));
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_CascadeEpoch)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
