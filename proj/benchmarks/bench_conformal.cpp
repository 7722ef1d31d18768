#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "cpl/conformal.hpp"
#include "cpl/rng.hpp"
#include "cpl/scores.hpp"

namespace {

std::vector<double> random_scores(std::size_t n, std::uint64_t salt) {
  const cpl::rng::CounterRng rng(salt, cpl::rng::Stream::kCalibration);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = rng.unit(i);
  return scores;
}

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

void BM_ConformalQuantile(benchmark::State& state) {
  const auto scores = random_scores(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::conformal_quantile(scores, 0.1));
  }
}
BENCHMARK(BM_ConformalQuantile)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_PredictSetEnumerated(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const auto sorted = cpl::sort_prediction(random_prob_row(k, 4));
  cpl::ScoreParams params;
  params.variant = cpl::ScoreVariant::kSaps;
  params.lambda = 0.1;
  const cpl::Threshold tau{0.45};
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::predict_set(sorted, 0.5, tau, params));
  }
}
BENCHMARK(BM_PredictSetEnumerated)->Arg(100)->Arg(1000);

void BM_SetSizeClosedForm(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const auto sorted = cpl::sort_prediction(random_prob_row(k, 4));
  cpl::ScoreParams params;
  params.variant = cpl::ScoreVariant::kSaps;
  params.lambda = 0.1;
  const cpl::Threshold tau{0.45};
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::set_size_closed_form(sorted, 0.5, tau, params));
  }
}
BENCHMARK(BM_SetSizeClosedForm)->Arg(100)->Arg(1000);

}  // namespace
