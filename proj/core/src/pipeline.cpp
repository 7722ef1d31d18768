#include "cpl/pipeline.hpp"

#include <stdexcept>
#include <string>

namespace cpl {

PipelineResult run_pipeline(const LabeledDataset& calibration,
                            const LabeledDataset& test,
                            const PipelineConfig& config) {
  calibration.validate();
  test.validate();
  if (calibration.k() != test.k()) {
    throw std::invalid_argument(
        "run_pipeline: calibration has " + std::to_string(calibration.k()) +
        " classes but test has " + std::to_string(test.k()));
  }

  PipelineResult result;
  result.record = calibrate(calibration, config);

  PredictionDetail detail =
      predict_dataset_detailed(result.record, test, config.seed);
  result.metrics =
      compute_metrics(detail.sets, test.labels, detail.true_ranks,
                      config.alpha, test.k());
  result.covered.resize(test.n());
  for (std::size_t i = 0; i < test.n(); ++i) {
    result.covered[i] = detail.sets[i].contains(test.labels[i]);
  }
  result.sets = std::move(detail.sets);
  return result;
}

}  // namespace cpl
