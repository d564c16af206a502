#include <benchmark/benchmark.h>

#include <vector>

#include "hetfx/baselines.hpp"
#include "hetfx/locfit.hpp"
#include "hetfx/psr.hpp"
#include "hetfx/simbench.hpp"

using namespace hetfx;

namespace {

GeneratedData make(std::size_t n) {
  ScenarioConfig sc;
  sc.n = n;
  sc.seed = 42;
  return generate_dataset(sc);
}

std::span<const double> span_of(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void BM_LocalLinear(benchmark::State& state) {
  const auto gen = make(static_cast<std::size_t>(state.range(0)));
  const auto x = span_of(gen.dataset.xl());
  const auto y = span_of(gen.dataset.y());
  const auto grid = simulation_grid(kDefaultGridSize);
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_linear_many(x, y, 0.1, grid.points()));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LocalLinear)->RangeMultiplier(4)->Range(500, 32000)->Complexity();

void BM_Step1AtSamples(benchmark::State& state) {
  const auto gen = make(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(step1_fit_at_samples(gen.dataset, span_of(gen.true_scores), 0.1, 0.05));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Step1AtSamples)->RangeMultiplier(2)->Range(500, 4000)->Complexity();

void BM_Matching(benchmark::State& state) {
  const auto gen = make(static_cast<std::size_t>(state.range(0)));
  const auto& ds = gen.dataset;
  for (auto _ : state) {
    benchmark::DoNotOptimize(match_units(span_of(ds.xl()), span_of(gen.true_scores), span_of(ds.d()), span_of(ds.y())));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matching)->RangeMultiplier(2)->Range(500, 8000)->Complexity();

void BM_PsrEstimate(benchmark::State& state) {
  const auto gen = make(static_cast<std::size_t>(state.range(0)));
  const auto grid = simulation_grid(kDefaultGridSize);
  PsrOptions o;
  o.bandwidth = state.range(1) ? BandwidthMethod::Lscv : BandwidthMethod::RuleOfThumb;
  for (auto _ : state) benchmark::DoNotOptimize(psr_estimate(gen.dataset, grid, o));
}
BENCHMARK(BM_PsrEstimate)->Args({1000, 0})->Args({1000, 1})->Args({2000, 1})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
