#include <benchmark/benchmark.h>

#include <random>

#include "difflens/knn.hpp"

using namespace difflens;

namespace {

struct Data {
    std::shared_ptr<const Matrix> train;
    std::shared_ptr<const std::vector<std::uint32_t>> labels;
    Matrix queries;
};

Data mixture(std::size_t n, std::size_t d) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> mu(20, std::vector<double>(d));
    for (auto& c : mu)
        for (auto& v : c) v = unit(rng);
    auto fill = [&](Matrix& m, std::vector<std::uint32_t>* labels) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const auto c = rng() % mu.size();
            if (labels) labels->push_back(static_cast<std::uint32_t>(c % 10));
            for (std::size_t k = 0; k < d; ++k) m(r, k) = static_cast<float>(mu[c][k] + unit(rng));
        }
    };
    auto train = std::make_shared<Matrix>(n, d);
    auto labels = std::make_shared<std::vector<std::uint32_t>>();
    fill(*train, labels.get());
    Matrix q(256, d);
    fill(q, nullptr);
    return {train, labels, std::move(q)};
}

void query(benchmark::State& state, knn::Mode mode) {
    const auto data = mixture(static_cast<std::size_t>(state.range(0)), 64);
    const auto index = knn::ProbeIndex::build(data.train, data.labels, 0, mode);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(index.query(data.queries.row(i++ % data.queries.rows()), 10));
    }
    state.SetItemsProcessed(state.iterations());
}

void BM_QueryExact(benchmark::State& state) { query(state, knn::Mode::exact); }
void BM_QueryForest(benchmark::State& state) { query(state, knn::Mode::approximate); }

void BM_BuildForest(benchmark::State& state) {
    const auto data = mixture(static_cast<std::size_t>(state.range(0)), 64);
    for (auto _ : state) {
        benchmark::DoNotOptimize(knn::ProbeIndex::build(data.train, data.labels, 0, knn::Mode::approximate));
    }
}

}  // namespace

BENCHMARK(BM_QueryExact)->Arg(2000)->Arg(10000);
BENCHMARK(BM_QueryForest)->Arg(2000)->Arg(10000);
BENCHMARK(BM_BuildForest)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
