#include <benchmark/benchmark.h>

#include "cpl/dataset.hpp"
#include "cpl/pipeline.hpp"
#include "cpl/synthetic.hpp"

namespace {

cpl::LabeledDataset make_dataset(std::size_t n, std::uint64_t seed) {
  cpl::SyntheticSpec spec;
  spec.profile = cpl::geometric_profile(100, 0.6, 0.9);
  spec.tail_decay = 0.9;
  spec.noise = 0.5;
  spec.seed = seed;
  return cpl::generate_dataset(spec, n);
}

void BM_Softmax(benchmark::State& state) {
  const auto dataset = make_dataset(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::softmax(dataset.logits, 1.0));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          state.range(0) * 100);
}
BENCHMARK(BM_Softmax)->Arg(1000)->Arg(10000);

void BM_EndToEndPipeline(benchmark::State& state) {
  const auto calibration = make_dataset(2000, 11);
  const auto test = make_dataset(1000, 12);
  cpl::PipelineConfig config;
  config.alpha = 0.1;
  config.params.variant = cpl::ScoreVariant::kSaps;
  config.params.lambda = 0.1;
  config.seed = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpl::run_pipeline(calibration, test, config));
  }
}
BENCHMARK(BM_EndToEndPipeline);

void BM_GenerateDataset(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        make_dataset(static_cast<std::size_t>(state.range(0)), 13));
  }
}
BENCHMARK(BM_GenerateDataset)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
