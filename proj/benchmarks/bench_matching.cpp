#include <benchmark/benchmark.h>

#include "permsens/matcher.hpp"
#include "permsens/rng.hpp"
#include "permsens/simlab.hpp"

using namespace permsens;

static void BM_SolveAssignment(benchmark::State& state) {
  const auto rows = static_cast<Eigen::Index>(state.range(0));
  CounterRng rng(SeedSpec{1, 0});
  Eigen::MatrixXd cost(rows, rows + rows / 4);
  for (Eigen::Index i = 0; i < cost.rows(); ++i)
    for (Eigen::Index j = 0; j < cost.cols(); ++j) cost(i, j) = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(detail::solve_assignment(cost));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveAssignment)->RangeMultiplier(2)->Range(16, 512)->Complexity();

static void BM_OptimalPairMatch(benchmark::State& state) {
  const auto s = simlab::generate({simlab::ModelId::eq11, static_cast<std::size_t>(state.range(0))}, SeedSpec{2, 0});
  const auto dm = mahalanobis(s.data);
  for (auto _ : state) benchmark::DoNotOptimize(optimal_pair_match(s.data, dm));
}
BENCHMARK(BM_OptimalPairMatch)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_GreedyPairMatch(benchmark::State& state) {
  const auto s = simlab::generate({simlab::ModelId::eq11, static_cast<std::size_t>(state.range(0))}, SeedSpec{2, 0});
  const auto dm = mahalanobis(s.data);
  for (auto _ : state) benchmark::DoNotOptimize(greedy_pair_match(s.data, dm));
}
BENCHMARK(BM_GreedyPairMatch)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);
