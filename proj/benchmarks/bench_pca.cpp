#include <benchmark/benchmark.h>

#include <random>

#include "difflens/pca.hpp"

using namespace difflens;

namespace {

Matrix gaussian(std::size_t n, std::size_t d) {
    std::mt19937_64 rng(5);
    std::normal_distribution<float> unit(0.0f, 1.0f);
    Matrix m(n, d);
    for (auto& v : m.values()) v = unit(rng);
    return m;
}

void BM_PcaFit(benchmark::State& state) {
    const auto m = gaussian(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(pca::pca_fit(m, 2));
}

void BM_PcaTransform(benchmark::State& state) {
    const auto m = gaussian(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    const auto model = pca::pca_fit(m, 2);
    for (auto _ : state) benchmark::DoNotOptimize(pca::pca_transform(model, m));
}

}  // namespace

BENCHMARK(BM_PcaFit)->Args({2000, 64})->Args({2000, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PcaTransform)->Args({2000, 64})->Args({2000, 512})->Unit(benchmark::kMillisecond);
