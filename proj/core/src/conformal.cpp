#include "cpl/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "cpl/errors.hpp"
#include "cpl/parallel.hpp"
#include "cpl/temperature.hpp"

namespace cpl {

namespace {

using Json = nlohmann::ordered_json;

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie strictly in (0, 1)");
  }
}

// Variant-specific hyperparameters live in the record only when the
// variant reads them.
void params_to_json(const ScoreParams& params, Json& out) {
  out["variant"] = std::string(variant_name(params.variant));
  switch (params.variant) {
    case ScoreVariant::kAps:
      break;
    case ScoreVariant::kCons:
      out["gamma"] = params.gamma;
      break;
    case ScoreVariant::kRaps:
      out["phi"] = params.phi;
      out["k_reg"] = params.k_reg;
      break;
    case ScoreVariant::kSaps:
      out["lambda"] = params.lambda;
      break;
  }
}

double require_number(const Json& object, const char* key) {
  if (!object.contains(key) || !object[key].is_number()) {
    throw ParseError(std::string("calibration record: missing or non-numeric '") +
                     key + "'");
  }
  return object[key].get<double>();
}

constexpr double kRapsPhiGrid[] = {0.001, 0.01, 0.1,  0.15, 0.2, 0.25,
                                   0.3,   0.35, 0.4,  0.45, 0.5};
constexpr double kSapsLambdaGrid[] = {0.02, 0.05, 0.1,  0.15, 0.2,  0.25, 0.3,
                                      0.35, 0.4,  0.45, 0.5,  0.55, 0.6};

}  // namespace

std::span<const double> default_tuning_grid(ScoreVariant variant) {
  switch (variant) {
    case ScoreVariant::kRaps:
      return kRapsPhiGrid;
    case ScoreVariant::kSaps:
      return kSapsLambdaGrid;
    case ScoreVariant::kAps:
    case ScoreVariant::kCons:
      break;
  }
  throw std::invalid_argument(
      std::string("no tuning grid: ") + std::string(variant_name(variant)) +
      " has no tunable hyperparameter");
}

bool Threshold::infinite() const { return std::isinf(value) && value > 0.0; }

bool PredictionSet::contains(std::uint32_t label) const {
  return std::binary_search(members.begin(), members.end(), label);
}

std::string CalibrationRecord::to_json_string() const {
  Json out;
  out["alpha"] = alpha;
  params_to_json(params, out);
  if (n_classes) {
    out["k"] = *n_classes;
  }
  out["temperature"] = temperature;
  if (tau.infinite()) {
    out["tau"] = "inf";
  } else {
    out["tau"] = tau.value;
  }
  out["n_calibration"] = n_calibration;
  out["seed"] = seed;
  if (tuned_from) {
    Json origin;
    origin["grid"] = tuned_from->grid;
    origin["n_validation"] = tuned_from->n_validation;
    out["tuned_from"] = origin;
  }
  return out.dump();
}

CalibrationRecord CalibrationRecord::from_json_string(const std::string& text) {
  Json object;
  try {
    object = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("calibration record: invalid JSON: ") +
                     e.what());
  }
  if (!object.is_object()) {
    throw ParseError("calibration record: top level must be a JSON object");
  }

  CalibrationRecord record;
  try {
    record.alpha = require_number(object, "alpha");
    if (!(record.alpha > 0.0) || !(record.alpha < 1.0)) {
      throw ParseError("calibration record: alpha must lie in (0, 1)");
    }

    if (!object.contains("variant") || !object["variant"].is_string()) {
      throw ParseError("calibration record: missing or non-string 'variant'");
    }
    record.params.variant =
        variant_from_name(object["variant"].get<std::string>());
    switch (record.params.variant) {
      case ScoreVariant::kAps:
        break;
      case ScoreVariant::kCons:
        record.params.gamma = require_number(object, "gamma");
        break;
      case ScoreVariant::kRaps:
        record.params.phi = require_number(object, "phi");
        if (!object.contains("k_reg") ||
            !object["k_reg"].is_number_integer()) {
          throw ParseError("calibration record: missing or non-integer 'k_reg'");
        }
        record.params.k_reg = object["k_reg"].get<int>();
        break;
      case ScoreVariant::kSaps:
        record.params.lambda = require_number(object, "lambda");
        break;
    }
    record.params.validate();

    if (object.contains("k")) {
      if (!object["k"].is_number_integer()) {
        throw ParseError("calibration record: 'k' must be an integer");
      }
      const auto k = object["k"].get<std::size_t>();
      if (k < 2) {
        throw ParseError("calibration record: 'k' must be at least 2");
      }
      record.n_classes = k;
    }

    record.temperature = require_number(object, "temperature");
    if (!std::isfinite(record.temperature) || record.temperature <= 0.0) {
      throw ParseError("calibration record: temperature must be positive");
    }

    if (!object.contains("tau")) {
      throw ParseError("calibration record: missing 'tau'");
    }
    if (object["tau"].is_string()) {
      if (object["tau"].get<std::string>() != "inf") {
        throw ParseError("calibration record: tau must be a number or \"inf\"");
      }
      record.tau = Threshold{};
    } else if (object["tau"].is_number()) {
      record.tau.value = object["tau"].get<double>();
      if (std::isnan(record.tau.value)) {
        throw ParseError("calibration record: tau must not be NaN");
      }
    } else {
      throw ParseError("calibration record: tau must be a number or \"inf\"");
    }

    if (!object.contains("n_calibration") ||
        !object["n_calibration"].is_number_integer()) {
      throw ParseError(
          "calibration record: missing or non-integer 'n_calibration'");
    }
    record.n_calibration = object["n_calibration"].get<std::size_t>();
    if (record.n_calibration == 0) {
      throw ParseError("calibration record: n_calibration must be positive");
    }

    if (!object.contains("seed") || !object["seed"].is_number_integer()) {
      throw ParseError("calibration record: missing or non-integer 'seed'");
    }
    record.seed = object["seed"].get<std::uint64_t>();

    if (object.contains("tuned_from")) {
      const Json& origin = object["tuned_from"];
      if (!origin.is_object() || !origin.contains("grid") ||
          !origin["grid"].is_array() || !origin.contains("n_validation")) {
        throw ParseError("calibration record: malformed 'tuned_from'");
      }
      TunedFrom tuned;
      for (const Json& value : origin["grid"]) {
        if (!value.is_number()) {
          throw ParseError("calibration record: tuned_from.grid entries must "
                           "be numbers");
        }
        tuned.grid.push_back(value.get<double>());
      }
      tuned.n_validation = origin["n_validation"].get<std::size_t>();
      record.tuned_from = std::move(tuned);
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("calibration record: invalid field: ") +
                     e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("calibration record: ") + e.what());
  }
  return record;
}

std::vector<double> calibration_scores(
    const ProbabilityMatrix& probs, std::span<const std::uint32_t> labels,
    const ScoreParams& params,
    const std::function<double(std::size_t)>& u_at) {
  if (labels.size() != probs.n) {
    throw std::invalid_argument("calibration_scores: " +
                                std::to_string(probs.n) + " rows but " +
                                std::to_string(labels.size()) + " labels");
  }
  params.validate();

  std::vector<double> scores(probs.n);
  par::parallel_for(0, probs.n, [&](std::size_t i) {
    const SortedPrediction sorted = sort_prediction(probs.row(i));
    scores[i] = score_for_label(sorted, labels[i], u_at(i), params);
  });
  return scores;
}

std::vector<double> calibration_scores(const ProbabilityMatrix& probs,
                                       std::span<const std::uint32_t> labels,
                                       const ScoreParams& params,
                                       std::uint64_t seed, rng::Stream stream) {
  const rng::CounterRng draws(seed, stream);
  return calibration_scores(probs, labels, params,
                            [&draws](std::size_t i) { return draws.unit(i); });
}

Threshold conformal_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) {
    throw std::invalid_argument("conformal_quantile: no calibration scores");
  }
  check_alpha(alpha);
  for (double s : scores) {
    if (std::isnan(s)) {
      throw std::invalid_argument("conformal_quantile: NaN score");
    }
  }

  const auto n = static_cast<double>(scores.size());
  const double position = std::ceil((n + 1.0) * (1.0 - alpha));
  if (position > n) {
    return Threshold{};  // +infinity: every class stays in the set
  }
  const auto m = static_cast<std::size_t>(position);

  std::vector<double> work(scores.begin(), scores.end());
  std::nth_element(work.begin(), work.begin() + (m - 1), work.end());
  return Threshold{work[m - 1]};
}

PredictionSet predict_set(const SortedPrediction& sorted, double u,
                          Threshold tau, const ScoreParams& params) {
  PredictionSet set;
  if (tau.infinite()) {
    set.members.resize(sorted.k());
    for (std::size_t y = 0; y < sorted.k(); ++y) {
      set.members[y] = static_cast<std::uint32_t>(y);
    }
    return set;
  }
  for (std::uint32_t y = 0; y < sorted.k(); ++y) {
    if (score_for_label(sorted, y, u, params) <= tau.value) {
      set.members.push_back(y);
    }
  }
  return set;
}

std::size_t set_size_closed_form(const SortedPrediction& sorted, double u,
                                 Threshold tau, const ScoreParams& params) {
  params.validate();
  const std::size_t k = sorted.k();
  if (tau.infinite()) return k;
  if (std::isnan(tau.value)) {
    throw std::invalid_argument("set_size_closed_form: threshold is NaN");
  }

  const auto fits = [&](std::size_t rank) {
    return score_for_rank(sorted, rank, u, params) <= tau.value;
  };
  const auto clamp_candidate = [&](double candidate) -> std::size_t {
    if (!(candidate > 0.0)) return 0;  // also catches NaN
    if (candidate >= static_cast<double>(k)) return k;
    return static_cast<std::size_t>(candidate);
  };

  std::size_t size = 0;
  switch (params.variant) {
    case ScoreVariant::kAps:
    case ScoreVariant::kRaps: {
      // Scores are nondecreasing in rank, so the set is a rank prefix and
      // its size is the largest rank that still fits.
      std::size_t lo = 0;
      std::size_t hi = k;
      while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (fits(mid)) {
          lo = mid;
        } else {
          hi = mid - 1;
        }
      }
      size = lo;
      break;
    }
    case ScoreVariant::kCons:
      // gamma * (rank - 1 + u) <= tau  <=>  rank <= tau / gamma + 1 - u.
      size = clamp_candidate(std::floor(tau.value / params.gamma - u) + 1.0);
      break;
    case ScoreVariant::kSaps:
      // Ranks past the first fit while
      // max_prob + (rank - 2 + u) * lambda <= tau.
      size = clamp_candidate(
          std::floor((tau.value - sorted.max_prob()) / params.lambda - u) +
          2.0);
      break;
  }

  // Exact boundary walk: the arithmetic candidate can be off by an ulp's
  // worth of rounding, so settle membership with the score function itself.
  while (size < k && fits(size + 1)) ++size;
  while (size > 0 && !fits(size)) --size;
  return size;
}

double tune_hyperparameter(std::span<const double> grid,
                           const ProbabilityMatrix& validation_probs,
                           std::span<const std::uint32_t> labels, double alpha,
                           const ScoreParams& base, std::uint64_t seed) {
  if (grid.empty()) {
    throw std::invalid_argument("tune_hyperparameter: empty grid");
  }
  if (base.variant != ScoreVariant::kRaps &&
      base.variant != ScoreVariant::kSaps) {
    throw std::invalid_argument(
        "tune_hyperparameter: only raps (phi) and saps (lambda) have a "
        "tunable hyperparameter");
  }
  if (labels.size() != validation_probs.n) {
    throw std::invalid_argument("tune_hyperparameter: row/label mismatch");
  }
  if (validation_probs.n == 0) {
    throw std::invalid_argument("tune_hyperparameter: empty validation set");
  }
  check_alpha(alpha);

  // Sort every row once; candidates reuse the order. Each validation row
  // keeps a single uniform draw across candidates and across its two roles
  // (calibration score, set size).
  const std::size_t n = validation_probs.n;
  std::vector<SortedPrediction> sorted(n);
  std::vector<double> draws(n);
  const rng::CounterRng tuning_draws(seed, rng::Stream::kTuning);
  par::parallel_for(0, n, [&](std::size_t i) {
    sorted[i] = sort_prediction(validation_probs.row(i));
    draws[i] = tuning_draws.unit(i);
  });

  double best_value = 0.0;
  double best_avg_size = std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (double candidate : grid) {
    ScoreParams params = base;
    if (base.variant == ScoreVariant::kRaps) {
      params.phi = candidate;
    } else {
      params.lambda = candidate;
    }
    params.validate();

    std::vector<double> scores(n);
    par::parallel_for(0, n, [&](std::size_t i) {
      scores[i] = score_for_label(sorted[i], labels[i], draws[i], params);
    });
    const Threshold tau = conformal_quantile(scores, alpha);

    std::vector<double> sizes(n);
    par::parallel_for(0, n, [&](std::size_t i) {
      sizes[i] = static_cast<double>(
          set_size_closed_form(sorted[i], draws[i], tau, params));
    });
    const double avg_size = par::pairwise_sum(sizes) / static_cast<double>(n);

    if (!have_best || avg_size < best_avg_size ||
        (avg_size == best_avg_size && candidate < best_value)) {
      have_best = true;
      best_avg_size = avg_size;
      best_value = candidate;
    }
  }
  return best_value;
}

CalibrationRecord calibrate(const LabeledDataset& calibration,
                            const PipelineConfig& config) {
  calibration.validate();
  check_alpha(config.alpha);
  config.params.validate();
  if (config.grid && config.grid->empty()) {
    throw std::invalid_argument("calibrate: tuning grid must not be empty");
  }
  if (config.grid && config.params.variant != ScoreVariant::kRaps &&
      config.params.variant != ScoreVariant::kSaps) {
    throw std::invalid_argument(
        "calibrate: a tuning grid needs a tunable variant (raps or saps)");
  }
  if (config.temperature_mode == TemperatureMode::kFixed &&
      (!std::isfinite(config.fixed_temperature) ||
       config.fixed_temperature <= 0.0)) {
    throw std::invalid_argument("calibrate: fixed temperature must be positive");
  }

  const bool needs_validation =
      config.grid.has_value() ||
      config.temperature_mode == TemperatureMode::kFit;

  // Temperature and hyperparameters are learned on the validation part.
  // Only tuning excludes those rows from the threshold: a tuned
  // hyperparameter must not be thresholded against the rows that chose it,
  // whereas untuned runs keep the full dataset for the quantile.
  LabeledDataset validation;
  LabeledDataset tuned_remainder;
  if (needs_validation) {
    SplitResult parts = split_dataset(calibration, config.validation_fraction,
                                      config.seed);
    validation = std::move(parts.part_a);
    tuned_remainder = std::move(parts.part_b);
  }
  const LabeledDataset& threshold_part =
      config.grid ? tuned_remainder : calibration;

  CalibrationRecord record;
  record.alpha = config.alpha;
  record.params = config.params;
  record.seed = config.seed;
  record.n_classes = calibration.k();

  switch (config.temperature_mode) {
    case TemperatureMode::kOff:
      record.temperature = 1.0;
      break;
    case TemperatureMode::kFixed:
      record.temperature = config.fixed_temperature;
      break;
    case TemperatureMode::kFit:
      record.temperature = fit_temperature(validation).temperature;
      break;
  }

  if (config.grid) {
    const ProbabilityMatrix validation_probs =
        softmax(validation.logits, record.temperature);
    const double chosen =
        tune_hyperparameter(*config.grid, validation_probs, validation.labels,
                            config.alpha, config.params, config.seed);
    if (config.params.variant == ScoreVariant::kRaps) {
      record.params.phi = chosen;
    } else {
      record.params.lambda = chosen;
    }
    record.tuned_from =
        TunedFrom{std::vector<double>(config.grid->begin(), config.grid->end()),
                  validation.n()};
  }

  const ProbabilityMatrix threshold_probs =
      softmax(threshold_part.logits, record.temperature);
  const std::vector<double> scores =
      calibration_scores(threshold_probs, threshold_part.labels, record.params,
                         config.seed, rng::Stream::kCalibration);
  record.tau = conformal_quantile(scores, config.alpha);
  record.n_calibration = threshold_part.n();
  return record;
}

namespace {

PredictionDetail predict_rows(const CalibrationRecord& record,
                              const LogitMatrix& logits,
                              const std::uint32_t* labels,
                              std::uint64_t seed) {
  record.params.validate();
  if (record.n_classes && *record.n_classes != logits.k) {
    throw std::invalid_argument(
        "record was calibrated for " + std::to_string(*record.n_classes) +
        " classes but the dataset has " + std::to_string(logits.k));
  }
  const ProbabilityMatrix probs = softmax(logits, record.temperature);

  PredictionDetail detail;
  detail.sets.resize(probs.n);
  if (labels != nullptr) {
    detail.true_ranks.resize(probs.n);
    detail.max_probs.resize(probs.n);
  }

  const rng::CounterRng draws(seed, rng::Stream::kTest);
  par::parallel_for(0, probs.n, [&](std::size_t i) {
    const SortedPrediction sorted = sort_prediction(probs.row(i));
    const double u = draws.unit(i);
    detail.sets[i] = predict_set(sorted, u, record.tau, record.params);
    if (labels != nullptr) {
      detail.true_ranks[i] = sorted.rank_of(labels[i]);
      detail.max_probs[i] = sorted.max_prob();
    }
  });
  return detail;
}

}  // namespace

std::vector<PredictionSet> predict_dataset(const CalibrationRecord& record,
                                           const LogitMatrix& logits,
                                           std::uint64_t seed) {
  logits.validate();
  return predict_rows(record, logits, nullptr, seed).sets;
}

PredictionDetail predict_dataset_detailed(const CalibrationRecord& record,
                                          const LabeledDataset& test,
                                          std::uint64_t seed) {
  test.validate();
  return predict_rows(record, test.logits, test.labels.data(), seed);
}

}  // namespace cpl
