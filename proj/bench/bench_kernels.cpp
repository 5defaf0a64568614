#include <benchmark/benchmark.h>

#include <vector>

#include "evomerge/evaluation.hpp"
#include "evomerge/merge.hpp"
#include "evomerge/philox.hpp"
#include "evomerge/reference.hpp"

using namespace evomerge;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    StreamRng rng(seed, 1);
    std::vector<double> v(n);
    for (auto& x : v) x = 2 * rng.uniform() - 1;
    return v;
}

Tensor f64_tensor(Shape shape, const std::vector<double>& values) {
    return Tensor::from_f64(DType::f64, std::move(shape), values);
}

TensorMap random_map(std::size_t n, std::uint64_t seed) {
    TensorMap m;
    m.entries.emplace("w", f64_tensor({n}, random_vector(n, seed)));
    return m;
}

// 64 -> 256 -> 4 classifier plus a batch of inputs.
struct MlpCase {
    TensorMap model;
    std::vector<std::vector<double>> batch;
    MlpCase() {
        model.entries.emplace("layers.0.weight", f64_tensor({256, 64}, random_vector(256 * 64, 1)));
        model.entries.emplace("layers.0.bias", f64_tensor({256}, random_vector(256, 2)));
        model.entries.emplace("layers.1.weight", f64_tensor({4, 256}, random_vector(4 * 256, 3)));
        model.entries.emplace("layers.1.bias", f64_tensor({4}, random_vector(4, 4)));
        for (std::uint64_t i = 0; i < 2000; ++i) batch.push_back(random_vector(64, 100 + i));
    }
};

void BM_dot_parallel(benchmark::State& state) {
    const auto a = random_vector(state.range(0), 1), b = random_vector(state.range(0), 2);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::dot(a, b));
}

void BM_dot_serial(benchmark::State& state) {
    const auto a = random_vector(state.range(0), 1), b = random_vector(state.range(0), 2);
    for (auto _ : state) benchmark::DoNotOptimize(reference::dot(a, b));
}

void BM_trim_parallel(benchmark::State& state) {
    const auto v = random_vector(state.range(0), 3);
    for (auto _ : state) {
        auto w = v;
        kernels::trim_top_k(w, 0.2);
        benchmark::DoNotOptimize(w.data());
    }
}

// the reference is O(n^2), so keep it small
void BM_trim_serial(benchmark::State& state) {
    const auto v = random_vector(state.range(0), 3);
    for (auto _ : state) benchmark::DoNotOptimize(reference::trim_top_k(v, 0.2));
}

void BM_dare_parallel(benchmark::State& state) {
    const auto v = random_vector(state.range(0), 4);
    for (auto _ : state) {
        auto w = v;
        kernels::dare_mask(w, 0.9, 7, 11);
        benchmark::DoNotOptimize(w.data());
    }
}

void BM_dare_serial(benchmark::State& state) {
    const auto v = random_vector(state.range(0), 4);
    for (auto _ : state) benchmark::DoNotOptimize(reference::dare_mask(v, 0.9, 7, 11));
}

void BM_ties_parallel(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto base = random_map(n, 5), e1 = random_map(n, 6), e2 = random_map(n, 7), e3 = random_map(n, 8);
    const TensorMap* eps[] = {&e1, &e2, &e3};
    const double w[] = {0.5, 0.3, 0.8};
    for (auto _ : state) benchmark::DoNotOptimize(ties_merge(base, eps, w, 0.3));
}

void BM_ties_serial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto base = random_map(n, 5), e1 = random_map(n, 6), e2 = random_map(n, 7), e3 = random_map(n, 8);
    const TensorMap* eps[] = {&e1, &e2, &e3};
    const double w[] = {0.5, 0.3, 0.8};
    for (auto _ : state) benchmark::DoNotOptimize(reference::ties(base, eps, w, 0.3));
}

void BM_mlp_parallel(benchmark::State& state) {
    static const MlpCase c;
    const ToyMlp mlp(c.model);
    for (auto _ : state) benchmark::DoNotOptimize(mlp.predict_batch(c.batch));
}

void BM_mlp_serial(benchmark::State& state) {
    static const MlpCase c;
    for (auto _ : state) benchmark::DoNotOptimize(reference::mlp_forward_batch(c.model, c.batch));
}

}  // namespace

BENCHMARK(BM_dot_parallel)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_dot_serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_trim_parallel)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_trim_serial)->Arg(1 << 12);
BENCHMARK(BM_dare_parallel)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_dare_serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_ties_parallel)->Arg(1 << 10);
BENCHMARK(BM_ties_serial)->Arg(1 << 10);
BENCHMARK(BM_mlp_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mlp_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
