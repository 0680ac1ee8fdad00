#include <benchmark/benchmark.h>

#include <random>

#include "scr/ranker.hpp"

namespace {

// Row of N distances with values in [0, 255*4], as IntSCR produces at M=4.
scr::DistanceRow make_row(std::size_t n, bool integer) {
  std::mt19937_64 rng(n);
  scr::DistanceRow row;
  row.kind = integer ? scr::DistanceKind::int_scr : scr::DistanceKind::scr;
  if (integer) {
    row.integer.resize(n);
    for (auto& v : row.integer) v = std::uint32_t(rng() % 1021);
  } else {
    std::uniform_real_distribution<double> u(0.0, 1020.0);
    row.real.resize(n);
    for (auto& v : row.real) v = u(rng);
  }
  return row;
}

void BM_CountingSort(benchmark::State& state) {
  const auto row = make_row(std::size_t(state.range(0)), true);
  scr::CountingRanker ranker(1020);
  for (auto _ : state) benchmark::DoNotOptimize(ranker.rank(row));
  state.SetComplexityN(state.range(0));
}

void BM_ComparisonSort(benchmark::State& state) {
  const auto row = make_row(std::size_t(state.range(0)), false);
  for (auto _ : state) benchmark::DoNotOptimize(scr::comparison_sort_rank(row));
  state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_CountingSort)->RangeMultiplier(10)->Range(1000, 1000000)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);
BENCHMARK(BM_ComparisonSort)->RangeMultiplier(10)->Range(1000, 1000000)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oNLogN);

BENCHMARK_MAIN();
