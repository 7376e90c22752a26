#include "metahdr/autograd.hpp"
#include "metahdr/meta.hpp"
#include "metahdr/metrics.hpp"
#include "metahdr/ops.hpp"
#include "metahdr/rgbe.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace metahdr;

namespace {

template <class T>
Tensor<T> noise(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(d(rng));
    return Tensor<T>(std::move(shape), std::move(v));
}

UNetConfig net(int depth, int base) {
    UNetConfig c;
    c.depth = depth;
    c.base_channels = base;
    return c;
}

}  // namespace

// args: channels, spatial edge
static void BM_Conv2d(benchmark::State& state) {
    const auto c = state.range(0), n = state.range(1);
    const auto x = noise<float>({1, c, n, n}, 1);
    const auto w = noise<float>({c, c, 3, 3}, 2);
    const auto b = Tensor<float>::zeros({c});
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1));
    state.SetItemsProcessed(state.iterations() * c * c * 9 * n * n);
}
BENCHMARK(BM_Conv2d)->Args({8, 64})->Args({32, 64})->Args({64, 32})->Unit(benchmark::kMicrosecond);

static void BM_Conv2dBackward(benchmark::State& state) {
    const auto c = state.range(0), n = state.range(1);
    const auto x = noise<float>({1, c, n, n}, 1).leaf();
    const auto w = noise<float>({c, c, 3, 3}, 2).leaf();
    const auto b = Tensor<float>::zeros({c}).leaf();
    const std::vector<Tensor<float>> wrt{x, w, b};
    for (auto _ : state) {
        const auto out = sum(conv2d(x, w, b, 1));
        benchmark::DoNotOptimize(backward(out, std::span<const Tensor<float>>(wrt), false));
    }
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 64})->Args({32, 64})->Unit(benchmark::kMicrosecond);

// args: depth, base channels, spatial edge
static void BM_UNetForward(benchmark::State& state) {
    const auto params = init_params<float>(net(int(state.range(0)), int(state.range(1))), 0);
    const auto n = state.range(2);
    const auto x = noise<float>({1, 3, n, n}, 3);
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(forward(params, x));
}
BENCHMARK(BM_UNetForward)->Args({2, 8, 64})->Args({4, 32, 64})->Args({4, 32, 128})->Unit(benchmark::kMillisecond);

// args: mode (0 second order, 1 first order)
static void BM_MetaStep(benchmark::State& state) {
    const auto theta = init_params<float>(net(2, 8), 7);
    const auto scenes = synth_scenes(1, 5, 64);
    TrueHdrLabels labels;
    std::vector<Task> batch;
    for (const auto& s : scenes) batch.push_back(make_task(s, Exposure::zero, labels));
    MetaConfig m;
    m.meta_batch = 5;
    AdaptConfig a;
    a.mode = state.range(0) == 0 ? MetaMode::second_order : MetaMode::first_order;
    for (auto _ : state) {
        OuterOptimizer<float> opt(m.optimizer, m.outer_lr);
        benchmark::DoNotOptimize(meta_step(theta, batch, m, a, opt));
    }
    state.SetLabel(std::string(mode_name(a.mode)));
}
BENCHMARK(BM_MetaStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
    const auto n = int(state.range(0));
    Image a(3, n, n), b(3, n, n);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u;
    for (auto& v : a.data) v = u(rng);
    for (auto& v : b.data) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);

static void BM_RgbeRoundTrip(benchmark::State& state) {
    const auto n = int(state.range(0));
    Image img(3, n, n);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 10.0f);
    for (auto& v : img.data) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(decode_rgbe(encode_rgbe(img)));
    state.SetBytesProcessed(state.iterations() * n * n * 12);
}
BENCHMARK(BM_RgbeRoundTrip)->Arg(512)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
