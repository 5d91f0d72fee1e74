#include <benchmark/benchmark.h>

#include "caae/trainer.hpp"

using namespace caae;

namespace {

TrainBatch synthetic_batch(int n, const ModelConfig& m, std::uint64_t seed) {
    GenConfig gen;
    gen.patch_size = m.patch_size;
    TrainBatch batch;
    batch.a = Tensor<float>({n, m.channels, m.patch_size, m.patch_size});
    batch.b = Tensor<float>({n, m.channels, m.patch_size, m.patch_size});
    const std::size_t plane = static_cast<std::size_t>(m.patch_size) * m.patch_size;
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(seed, "bench_batch", i);
        auto pair = gen_patch_pair(static_cast<TissueClass>(i % 3), gen, rng);
        for (int c = 0; c < 3; ++c)
            for (std::size_t px = 0; px < plane; ++px) {
                batch.a.data[(static_cast<std::size_t>(i) * 3 + c) * plane + px] = pair.image_a.data[px * 3 + c];
                batch.b.data[(static_cast<std::size_t>(i) * 3 + c) * plane + px] = pair.image_b.data[px * 3 + c];
            }
    }
    return batch;
}

}  // namespace

// the full three-stage update at the synthetic-benchmark scale
static void BM_TrainStepBenchmarkScale(benchmark::State& state) {
    ModelConfig m;
    m.cluster_count = 10;
    m.style_dim = 8;
    m.patch_size = 64;
    m.conv_widths = {8, 16, 32};
    TrainConfig t;
    t.mode = ReconMode::A2B;
    t.batch_size = 32;
    auto params = init_params<float>(m, 1);
    OptStates opts;
    auto batch = synthetic_batch(32, m, 7);
    std::int64_t step = 0;
    for (auto _ : state) {
        auto report = train_step(params, opts, batch, m, t, step++);
        benchmark::DoNotOptimize(report.recon);
    }
    state.counters["patches/s"] =
        benchmark::Counter(32, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_TrainStepBenchmarkScale)->Unit(benchmark::kMillisecond)->MinTime(3.0);

// paper-scale architecture (K=50, d=20, 128x128 patches)
static void BM_TrainStepPaperScale(benchmark::State& state) {
    ModelConfig m;  // defaults
    TrainConfig t;
    t.mode = ReconMode::A2A;
    t.batch_size = 8;
    auto params = init_params<float>(m, 1);
    OptStates opts;
    auto batch = synthetic_batch(8, m, 9);
    std::int64_t step = 0;
    for (auto _ : state) {
        auto report = train_step(params, opts, batch, m, t, step++);
        benchmark::DoNotOptimize(report.recon);
    }
}
BENCHMARK(BM_TrainStepPaperScale)->Unit(benchmark::kMillisecond)->Iterations(3);

static void BM_EncodeBenchmarkScale(benchmark::State& state) {
    ModelConfig m;
    m.cluster_count = 10;
    m.style_dim = 8;
    m.patch_size = 64;
    m.conv_widths = {8, 16, 32};
    auto params = init_params<float>(m, 1);
    auto batch = synthetic_batch(64, m, 11);
    for (auto _ : state) {
        auto lat = encode(params, batch.a, m);
        benchmark::DoNotOptimize(lat.z.data.data());
    }
    state.counters["patches/s"] =
        benchmark::Counter(64, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_EncodeBenchmarkScale)->Unit(benchmark::kMillisecond);
