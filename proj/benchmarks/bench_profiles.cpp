#include <benchmark/benchmark.h>

#include "difflens/analytics.hpp"
#include "difflens/flow.hpp"
#include "difflens/probes.hpp"
#include "difflens/synth.hpp"

using namespace difflens;

namespace {

BundlePtr synthetic(std::size_t n_train, std::size_t n_test) {
    synth::SynthSpec spec;
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.mislabeled = n_test / 20;
    spec.late_separators = n_test / 20;
    return Bundle::from_data(synth::generate(spec).data);
}

DifficultyConfig config_for(knn::Mode mode) {
    DifficultyConfig c;
    c.probes.mode = mode;
    return c;
}

void profiles(benchmark::State& state, knn::Mode mode) {
    const auto bundle = synthetic(2000, 500);
    const auto config = config_for(mode);
    const auto probes = ProbeSet::build(bundle, config.probes);
    for (auto _ : state) benchmark::DoNotOptimize(compute_profiles(*bundle, probes, config));
    state.SetItemsProcessed(state.iterations() * 500);
}

void BM_ProfilesExact(benchmark::State& state) { profiles(state, knn::Mode::exact); }
void BM_ProfilesForest(benchmark::State& state) { profiles(state, knn::Mode::approximate); }

void BM_BuildFlow(benchmark::State& state) {
    const auto bundle = synthetic(2000, static_cast<std::size_t>(state.range(0)));
    const auto config = config_for(knn::Mode::approximate);
    const auto table = compute_profiles(*bundle, ProbeSet::build(bundle, config.probes), config);
    const auto rows = all_rows(table);
    for (auto _ : state) benchmark::DoNotOptimize(build_flow(table, rows, bundle->manifest().num_classes()));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.size()));
}

}  // namespace

BENCHMARK(BM_ProfilesExact)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProfilesForest)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildFlow)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
