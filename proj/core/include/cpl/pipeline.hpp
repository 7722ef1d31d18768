#pragma once

#include "cpl/conformal.hpp"
#include "cpl/metrics.hpp"

namespace cpl {

struct PipelineResult {
  CalibrationRecord record;
  std::vector<PredictionSet> sets;  // one per test row
  std::vector<bool> covered;        // set contains the true label
  MetricsReport metrics;
};

// End-to-end run: calibrate on one dataset, predict and score on another.
// The two datasets must agree on the class count. Fully deterministic for
// a fixed config, independent of thread count.
PipelineResult run_pipeline(const LabeledDataset& calibration,
                            const LabeledDataset& test,
                            const PipelineConfig& config);

}  // namespace cpl
