#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "cpl/rng.hpp"
#include "cpl/scores.hpp"

namespace {

std::vector<double> random_prob_row(std::size_t k, std::uint64_t salt) {
  const cpl::rng::CounterRng rng(salt, cpl::rng::Stream::kSynthValue);
  std::vector<double> row(k);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    row[j] = -std::log(rng.unit_open(j));
    sum += row[j];
  }
  for (double& p : row) p /= sum;
  return row;
}

cpl::ScoreParams params_for(cpl::ScoreVariant variant) {
  cpl::ScoreParams p;
  p.variant = variant;
  p.lambda = 0.1;
  p.phi = 0.1;
  p.k_reg = 1;
  return p;
}

void BM_SortPrediction(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const auto row = random_prob_row(k, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::sort_prediction(row));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(k));
}
BENCHMARK(BM_SortPrediction)->Arg(10)->Arg(100)->Arg(1000);

void BM_ScoresAllLabels(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const auto variant = static_cast<cpl::ScoreVariant>(state.range(1));
  const auto sorted = cpl::sort_prediction(random_prob_row(k, 2));
  const auto params = params_for(variant);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::scores_all_labels(sorted, 0.5, params));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(k));
}
BENCHMARK(BM_ScoresAllLabels)
    ->ArgsProduct({{1000}, {0, 1, 2, 3}})
    ->ArgNames({"k", "variant"});

}  // namespace
