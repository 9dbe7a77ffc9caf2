#include <benchmark/benchmark.h>

#include "permsens/density.hpp"
#include "permsens/rng.hpp"
#include "permsens/simlab.hpp"

using namespace permsens;

static void BM_KernelEvaluate(benchmark::State& state) {
  const auto s = simlab::generate({simlab::ModelId::eq11, static_cast<std::size_t>(state.range(0))}, SeedSpec{5, 0});
  const auto model = fit_kernel(s.data, SharpNull{});
  const std::vector<double> x = {0.4};
  double y = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.evaluate(y, x));
    y += 1e-3;
  }
}
BENCHMARK(BM_KernelEvaluate)->Arg(500)->Arg(2000);

static void BM_Permanent(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  CounterRng rng(SeedSpec{6, 0});
  std::vector<double> m(n * n);
  for (double& v : m) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(permanent(m, n));
}
BENCHMARK(BM_Permanent)->DenseRange(2, 8, 2);
