#include "cpl/temperature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cpl/parallel.hpp"

namespace cpl {

namespace {

constexpr double kMinTemperature = 0.05;
constexpr double kMaxTemperature = 100.0;
constexpr double kLogTolerance = 1e-4;
constexpr double kFlatSpread = 1e-9;

}  // namespace

double mean_nll(const LogitMatrix& logits,
                std::span<const std::uint32_t> labels, double temperature) {
  logits.validate();
  if (labels.size() != logits.n) {
    throw std::invalid_argument("mean_nll: " + std::to_string(logits.n) +
                                " rows but " + std::to_string(labels.size()) +
                                " labels");
  }
  if (!std::isfinite(temperature) || temperature <= 0.0) {
    throw std::invalid_argument("temperature must be positive and finite");
  }

  std::vector<double> per_row(logits.n);
  par::parallel_for(0, logits.n, [&](std::size_t i) {
    const auto row = logits.row(i);
    const std::uint32_t label = labels[i];
    if (label >= logits.k) {
      throw std::invalid_argument("mean_nll: label out of range at row " +
                                  std::to_string(i));
    }
    double row_max = row[0];
    for (float v : row) row_max = std::max(row_max, static_cast<double>(v));
    double sum = 0.0;
    for (float v : row) {
      sum += std::exp((static_cast<double>(v) - row_max) / temperature);
    }
    per_row[i] = std::log(sum) -
                 (static_cast<double>(row[label]) - row_max) / temperature;
  });
  return par::pairwise_sum(per_row) / static_cast<double>(logits.n);
}

TemperatureFit fit_temperature(const LabeledDataset& dataset) {
  dataset.validate();
  const auto objective = [&](double log_t) {
    return mean_nll(dataset.logits, dataset.labels, std::exp(log_t));
  };

  double a = std::log(kMinTemperature);
  double b = std::log(kMaxTemperature);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;

  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = objective(x1);
  double f2 = objective(x2);

  // Degenerate inputs (e.g. identical logits in every class) make the
  // objective constant; any temperature is as good as any other, so report
  // the identity.
  {
    const double fa = objective(a);
    const double fb = objective(b);
    const double lo = std::min({fa, fb, f1, f2});
    const double hi = std::max({fa, fb, f1, f2});
    if (hi - lo < kFlatSpread) {
      return {1.0, objective(0.0), 0};
    }
  }

  int iterations = 0;
  while (b - a > kLogTolerance) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(x2);
    }
    ++iterations;
  }

  const double log_t = 0.5 * (a + b);
  double temperature =
      std::clamp(std::exp(log_t), kMinTemperature, kMaxTemperature);
  double nll = objective(std::log(temperature));
  // A likelihood that keeps improving toward an endpoint leaves the final
  // bracket hugging that endpoint; report the exact bound when it does at
  // least as well as the bracket midpoint.
  const double log_min = std::log(kMinTemperature);
  const double log_max = std::log(kMaxTemperature);
  if (a <= log_min + kLogTolerance) {
    const double bound_nll = objective(log_min);
    if (bound_nll <= nll) {
      temperature = kMinTemperature;
      nll = bound_nll;
    }
  } else if (b >= log_max - kLogTolerance) {
    const double bound_nll = objective(log_max);
    if (bound_nll <= nll) {
      temperature = kMaxTemperature;
      nll = bound_nll;
    }
  }
  return {temperature, nll, iterations};
}

double expected_calibration_error(const ProbabilityMatrix& probs,
                                  std::span<const std::uint32_t> labels,
                                  int bins) {
  probs.validate();
  if (labels.size() != probs.n) {
    throw std::invalid_argument("expected_calibration_error: " +
                                std::to_string(probs.n) + " rows but " +
                                std::to_string(labels.size()) + " labels");
  }
  if (bins < 1) {
    throw std::invalid_argument("expected_calibration_error: need >= 1 bin");
  }

  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> acc_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);

  for (std::size_t i = 0; i < probs.n; ++i) {
    const auto row = probs.row(i);
    std::size_t arg_max = 0;
    for (std::size_t j = 1; j < probs.k; ++j) {
      if (row[j] > row[arg_max]) arg_max = j;
    }
    const double confidence = row[arg_max];
    // Right-closed bins: confidence of exactly j/bins falls in bin j-1.
    int bin = 0;
    if (confidence > 0.0) {
      bin = static_cast<int>(std::ceil(confidence * bins)) - 1;
      bin = std::clamp(bin, 0, bins - 1);
    }
    conf_sum[static_cast<std::size_t>(bin)] += confidence;
    acc_sum[static_cast<std::size_t>(bin)] += arg_max == labels[i] ? 1.0 : 0.0;
    ++count[static_cast<std::size_t>(bin)];
  }

  double error = 0.0;
  for (int b = 0; b < bins; ++b) {
    const auto idx = static_cast<std::size_t>(b);
    if (count[idx] == 0) continue;
    const double weight =
        static_cast<double>(count[idx]) / static_cast<double>(probs.n);
    const double gap = std::fabs(acc_sum[idx] - conf_sum[idx]) /
                       static_cast<double>(count[idx]);
    error += weight * gap;
  }
  return error;
}

}  // namespace cpl
