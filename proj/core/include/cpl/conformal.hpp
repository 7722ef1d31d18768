#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpl/dataset.hpp"
#include "cpl/rng.hpp"
#include "cpl/scores.hpp"

namespace cpl {

// Score cutoff from calibration. +infinity means "keep every class", the
// defined fallback when the calibration set is too small for the requested
// alpha.
struct Threshold {
  double value = std::numeric_limits<double>::infinity();
  bool infinite() const;
};

// Classes whose score falls at or below the threshold, in ascending class
// order.
struct PredictionSet {
  std::vector<std::uint32_t> members;

  std::size_t size() const { return members.size(); }
  bool contains(std::uint32_t label) const;
};

// How a tuned hyperparameter was chosen; recorded for provenance.
struct TunedFrom {
  std::vector<double> grid;
  std::size_t n_validation = 0;
};

// Everything needed to reproduce predictions: the score family and its
// hyperparameters, the temperature applied to logits, the threshold, and
// the seed that drives per-example uniform draws. Serializes to a single
// JSON object; tau serializes as the string "inf" when infinite.
struct CalibrationRecord {
  double alpha = 0.1;
  ScoreParams params;
  double temperature = 1.0;
  Threshold tau;
  std::size_t n_calibration = 0;
  std::uint64_t seed = 0;
  // Class count the record was calibrated for; lets prediction reject a
  // dataset of different width. Optional so hand-written records without
  // the "k" key still load.
  std::optional<std::size_t> n_classes;
  std::optional<TunedFrom> tuned_from;

  std::string to_json_string() const;
  // Throws ParseError on malformed JSON or out-of-range fields.
  static CalibrationRecord from_json_string(const std::string& text);
};

// Standard tuning grids: phi candidates for kRaps, lambda candidates for
// kSaps. Other variants have no tunable hyperparameter and are rejected.
std::span<const double> default_tuning_grid(ScoreVariant variant);

// True-label scores for every row, one uniform draw per row taken from
// (seed, stream, row index).
std::vector<double> calibration_scores(const ProbabilityMatrix& probs,
                                       std::span<const std::uint32_t> labels,
                                       const ScoreParams& params,
                                       std::uint64_t seed,
                                       rng::Stream stream =
                                           rng::Stream::kCalibration);

// Same, with caller-supplied draws: u_at(i) is row i's uniform value.
// Exists so tests can force specific draws.
std::vector<double> calibration_scores(
    const ProbabilityMatrix& probs, std::span<const std::uint32_t> labels,
    const ScoreParams& params,
    const std::function<double(std::size_t)>& u_at);

// The m-th smallest calibration score with m = ceil((n + 1) * (1 - alpha)),
// the finite-sample-corrected quantile. Returns an infinite threshold when
// m exceeds n. alpha must lie strictly in (0, 1).
Threshold conformal_quantile(std::span<const double> scores, double alpha);

// Reference set construction: scores every class and keeps those at or
// below the threshold. O(k) score evaluations past the initial sort.
PredictionSet predict_set(const SortedPrediction& sorted, double u,
                          Threshold tau, const ScoreParams& params);

// Set size without materializing members: an arithmetic candidate (or
// binary search for the cumulative variants) pinned down by a short exact
// boundary walk. Agrees with predict_set(...).size() exactly, including at
// threshold boundaries.
std::size_t set_size_closed_form(const SortedPrediction& sorted, double u,
                                 Threshold tau, const ScoreParams& params);

// Picks the grid value minimizing average self-calibrated set size on the
// validation set: for each candidate, a threshold is computed from the
// validation rows themselves and the resulting sizes are averaged over the
// same rows, every row reusing its one uniform draw for both roles. Ties
// break toward the smaller candidate. base supplies the variant and any
// fixed fields; the grid fills lambda (kSaps) or phi (kRaps). Other
// variants have nothing to tune and are rejected.
double tune_hyperparameter(std::span<const double> grid,
                           const ProbabilityMatrix& validation_probs,
                           std::span<const std::uint32_t> labels, double alpha,
                           const ScoreParams& base, std::uint64_t seed);

enum class TemperatureMode {
  kOff,    // use logits as-is (temperature 1)
  kFixed,  // use a caller-supplied temperature
  kFit,    // fit temperature on the held-out validation part
};

struct PipelineConfig {
  double alpha = 0.1;
  ScoreParams params;
  // When present, tunes the variant's free hyperparameter on a held-out
  // validation part before thresholding on the remainder.
  std::optional<std::vector<double>> grid;
  TemperatureMode temperature_mode = TemperatureMode::kOff;
  double fixed_temperature = 1.0;
  // Fraction of the calibration data reserved for validation whenever
  // tuning or temperature fitting needs it.
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

// Calibration front half: validation split when needed, temperature
// resolution, optional tuning, then the conformal threshold. Tuned runs
// compute the threshold on the rows left after carving out validation;
// untuned runs use the whole dataset (temperature fitting alone borrows
// the validation rows but does not remove them from the threshold data).
CalibrationRecord calibrate(const LabeledDataset& calibration,
                            const PipelineConfig& config);

// Applies a record to new logits: temperature softmax, one uniform draw
// per row from (seed, kTest, row), set construction per row.
std::vector<PredictionSet> predict_dataset(const CalibrationRecord& record,
                                           const LogitMatrix& logits,
                                           std::uint64_t seed);

// predict_dataset plus the per-row facts metrics need: the 1-based rank of
// the true label and the top softmax probability.
struct PredictionDetail {
  std::vector<PredictionSet> sets;
  std::vector<std::uint32_t> true_ranks;
  std::vector<double> max_probs;
};
PredictionDetail predict_dataset_detailed(const CalibrationRecord& record,
                                          const LabeledDataset& test,
                                          std::uint64_t seed);

}  // namespace cpl
