#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpl/conformal.hpp"

namespace cpl {

// Inclusive size range; the last bucket of a partition also absorbs
// anything beyond its upper bound.
struct SizeBucket {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

// Set-size strata for size-stratified coverage violation.
inline constexpr std::array<SizeBucket, 5> kSizeStrata{
    {{0, 1}, {2, 3}, {4, 10}, {11, 100}, {101, 1000}}};

// True-label-rank strata for the difficulty breakdown.
inline constexpr std::array<SizeBucket, 5> kDifficultyStrata{
    {{1, 1}, {2, 3}, {4, 10}, {11, 100}, {101, 1000}}};

struct SizeStratum {
  std::string bucket;  // "1", "2-3", ...
  double mean_size = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  double alpha = 0.1;
  std::size_t n_test = 0;
  double coverage = 0.0;
  double avg_size = 0.0;
  double escv = 0.0;
  double sscv = 0.0;
  double empty_set_rate = 0.0;
  std::vector<SizeStratum> size_by_difficulty;  // non-empty strata, in order

  std::string to_json_string() const;
};

// Fraction of examples whose set contains the true label.
double coverage(std::span<const PredictionSet> sets,
                std::span<const std::uint32_t> labels);

// Mean set size.
double average_set_size(std::span<const PredictionSet> sets);

// Fraction of empty sets.
double empty_set_rate(std::span<const PredictionSet> sets);

// Each-size coverage violation: worst one-sided coverage shortfall
// max(0, (1 - alpha) - coverage) over exact set sizes 1..k that occur.
// Size-0 sets never cover and are reported via empty_set_rate instead.
double escv(std::span<const PredictionSet> sets,
            std::span<const std::uint32_t> labels, double alpha,
            std::size_t k);

// Size-stratified coverage violation: worst two-sided coverage gap
// |coverage - (1 - alpha)| over the occupied strata of the partition.
double sscv(std::span<const PredictionSet> sets,
            std::span<const std::uint32_t> labels, double alpha,
            std::span<const SizeBucket> partition = kSizeStrata);

// Mean set size grouped by the true label's rank. Only occupied strata are
// returned, in partition order.
std::vector<SizeStratum> size_by_difficulty(
    std::span<const PredictionSet> sets,
    std::span<const std::uint32_t> true_ranks,
    std::span<const SizeBucket> partition = kDifficultyStrata);

// Full report over one test pass.
MetricsReport compute_metrics(std::span<const PredictionSet> sets,
                              std::span<const std::uint32_t> labels,
                              std::span<const std::uint32_t> true_ranks,
                              double alpha, std::size_t k);

// Diagnostic: mean true-label rank within equal-width bins of the top
// softmax probability (right-closed, like the calibration-error bins).
// A sane classifier shows nonincreasing mean rank as confidence grows.
struct MspBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_rank = 0.0;
};
std::vector<MspBin> msp_rank_profile(std::span<const double> max_probs,
                                     std::span<const std::uint32_t> true_ranks,
                                     int bins);

}  // namespace cpl
