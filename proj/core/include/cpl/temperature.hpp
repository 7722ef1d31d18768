#pragma once

#include <cstdint>
#include <span>

#include "cpl/dataset.hpp"

namespace cpl {

struct TemperatureFit {
  double temperature = 1.0;  // in [0.05, 100]
  double nll = 0.0;          // mean negative log-likelihood at temperature
  int iterations = 0;        // golden-section interval reductions
};

// Mean negative log-likelihood of the true labels under
// softmax(logits / temperature); always >= 0.
double mean_nll(const LogitMatrix& logits, std::span<const std::uint32_t> labels,
                double temperature);

// One-parameter temperature scaling: minimizes mean_nll over
// temperature in [0.05, 100] by golden-section search on log(temperature)
// to an absolute tolerance of 1e-4 in log space. Deterministic: no
// randomness, fixed iteration policy. When the objective is flat across
// the probe points (spread < 1e-9) the temperature defaults to 1.
TemperatureFit fit_temperature(const LabeledDataset& dataset);

// Expected calibration error with equal-width confidence bins, right-closed
// so a confidence of exactly j/bins lands in bin j-1. Returns a value in
// [0, 1]. Confidence is the top softmax probability; a prediction counts as
// accurate when the lowest-index argmax class equals the label.
double expected_calibration_error(const ProbabilityMatrix& probs,
                                  std::span<const std::uint32_t> labels,
                                  int bins = 15);

}  // namespace cpl
