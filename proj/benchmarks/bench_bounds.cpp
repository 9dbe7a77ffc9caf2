#include <benchmark/benchmark.h>

#include "permsens/rng.hpp"
#include "permsens/sensearch.hpp"

using namespace permsens;

namespace {

ScoreTable random_pairs(std::size_t pairs) {
  CounterRng rng(SeedSpec{3, 0});
  ScoreTable t;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double a = rng.uniform();
    SetScores s;
    s.q = {-a, a};
    s.observed_rank = rng.below(2);
    t.sets.push_back(s);
  }
  return t;
}

}  // namespace

static void BM_WorstCaseSetBound(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  CounterRng rng(SeedSpec{4, 0});
  std::vector<double> q(n), w(n);
  for (std::size_t j = 0; j < n; ++j) {
    q[j] = static_cast<double>(j) + rng.uniform();
    w[j] = 0.5 + rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(worst_case_set_bound(q, w, 2.0));
}
BENCHMARK(BM_WorstCaseSetBound)->Arg(2)->Arg(4)->Arg(16)->Arg(64);

static void BM_UniformGaussian(benchmark::State& state) {
  const auto table = random_pairs(static_cast<std::size_t>(state.range(0)));
  SensitivitySpec spec;
  spec.gamma = 2.0;
  for (auto _ : state) benchmark::DoNotOptimize(uniform_pvalue(table, spec));
}
BENCHMARK(BM_UniformGaussian)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_UniformExact(benchmark::State& state) {
  const auto table = random_pairs(static_cast<std::size_t>(state.range(0)));
  SensitivitySpec spec;
  spec.gamma = 2.0;
  spec.method = Method::exact;
  for (auto _ : state) benchmark::DoNotOptimize(uniform_pvalue(table, spec));
}
BENCHMARK(BM_UniformExact)->Arg(10)->Arg(16)->Arg(20)->Unit(benchmark::kMillisecond);
