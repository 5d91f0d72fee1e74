#include <benchmark/benchmark.h>

#include "caae/graph.hpp"
#include "caae/ops.hpp"
#include "caae/rng.hpp"

using namespace caae;

namespace {

Tensor<float> random_tensor(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(shape);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

void conv2d_args(benchmark::internal::Benchmark* b) {
    // n, c_in, c_out, side (the benchmark-scale encoder stack)
    b->Args({32, 3, 8, 64})->Args({32, 8, 16, 32})->Args({32, 16, 32, 16});
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0)), ci = static_cast<int>(state.range(1));
    const int co = static_cast<int>(state.range(2)), side = static_cast<int>(state.range(3));
    auto x = random_tensor({n, ci, side, side}, 1);
    auto w = random_tensor({co, ci, 4, 4}, 2);
    Tensor<float> b({co});
    auto g = conv2d_geom(x.shape, w.shape, b.shape, 2, 1);
    Tensor<float> y(conv2d_out_shape(g));
    for (auto _ : state) {
        conv2d_forward(x.data.data(), w.data.data(), b.data.data(), y.data.data(), g);
        benchmark::DoNotOptimize(y.data.data());
    }
    const double flops = 2.0 * g.n * g.c_out * g.h_out * g.w_out * g.c_in * g.kh * g.kw;
    state.counters["GFLOP/s"] = benchmark::Counter(flops, benchmark::Counter::kIsIterationInvariantRate,
                                                   benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv2dForward)->Apply(conv2d_args)->Unit(benchmark::kMillisecond);

static void BM_Conv2dBackward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0)), ci = static_cast<int>(state.range(1));
    const int co = static_cast<int>(state.range(2)), side = static_cast<int>(state.range(3));
    auto x = random_tensor({n, ci, side, side}, 1);
    auto w = random_tensor({co, ci, 4, 4}, 2);
    Tensor<float> b({co});
    auto g = conv2d_geom(x.shape, w.shape, b.shape, 2, 1);
    auto dy = random_tensor(conv2d_out_shape(g), 3);
    Tensor<float> dx(x.shape), dw(w.shape), db(b.shape);
    for (auto _ : state) {
        conv2d_backward(x.data.data(), w.data.data(), dy.data.data(), dx.data.data(), dw.data.data(), db.data.data(),
                        g);
        benchmark::DoNotOptimize(dw.data.data());
    }
}
BENCHMARK(BM_Conv2dBackward)->Apply(conv2d_args)->Unit(benchmark::kMillisecond);

static void BM_ConvTranspose2dForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto x = random_tensor({n, 32, 8, 8}, 1);
    auto w = random_tensor({32, 16, 4, 4}, 2);
    Tensor<float> b({16});
    auto g = conv_transpose2d_geom(x.shape, w.shape, b.shape, 2, 1);
    Tensor<float> y(conv_transpose2d_out_shape(g));
    for (auto _ : state) {
        conv_transpose2d_forward(x.data.data(), w.data.data(), b.data.data(), y.data.data(), g);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_ConvTranspose2dForward)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_DenseForward(benchmark::State& state) {
    const int n = 32, f = static_cast<int>(state.range(0)), gdim = static_cast<int>(state.range(1));
    auto x = random_tensor({n, f}, 1);
    auto w = random_tensor({f, gdim}, 2);
    Tensor<float> b({gdim});
    Tensor<float> y({n, gdim});
    for (auto _ : state) {
        dense_forward(x.data.data(), w.data.data(), b.data.data(), y.data.data(), n, f, gdim);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_DenseForward)->Args({2048, 18})->Args({18, 2048})->Args({10, 128});

static void BM_GemmNN(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1)),
              n = static_cast<int>(state.range(2));
    auto a = random_tensor({m, k}, 1);
    auto b = random_tensor({k, n}, 2);
    Tensor<float> c({m, n});
    for (auto _ : state) {
        gemm_nn(a.data.data(), b.data.data(), c.data.data(), m, k, n);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.counters["GFLOP/s"] =
        benchmark::Counter(2.0 * m * k * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNN)->Args({8, 48, 1024})->Args({16, 128, 256})->Args({32, 256, 64});

static void BM_GraphBackwardSmall(benchmark::State& state) {
    auto x = random_tensor({8, 3, 16, 16}, 1);
    auto k = random_tensor({4, 3, 4, 4}, 2);
    Tensor<float> kb({4});
    auto w = random_tensor({256, 10}, 3);
    Tensor<float> wb({10});
    auto target = random_tensor({8, 10}, 4);
    k.set_requires_grad(true);
    kb.set_requires_grad(true);
    w.set_requires_grad(true);
    wb.set_requires_grad(true);
    for (auto _ : state) {
        k.zero_grad();
        kb.zero_grad();
        w.zero_grad();
        wb.zero_grad();
        Graph<float> g;
        auto h = g.conv2d(g.input(x), g.param(k), g.param(kb), 2, 1);
        h = g.leaky_relu(h, 0.2f);
        h = g.reshape(h, {8, 256});
        h = g.dense(h, g.param(w), g.param(wb));
        auto loss = g.mse_loss(g.softmax(h, 1), g.input(target));
        g.backward(loss);
        benchmark::DoNotOptimize(k.grad.data());
    }
}
BENCHMARK(BM_GraphBackwardSmall)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
