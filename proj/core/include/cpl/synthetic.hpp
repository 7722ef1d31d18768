#pragma once

#include <cstdint>
#include <span>

#include "cpl/dataset.hpp"

namespace cpl {

// Cumulative top-r accuracy targets: cumulative[r-1] is the probability
// that the true label lands within the r highest-probability classes.
// Nondecreasing, within [0, 1], and ending at exactly 1 so the
// distribution over ranks is complete.
struct AccuracyProfile {
  std::vector<double> cumulative;

  std::size_t k() const { return cumulative.size(); }
  void validate() const;
};

// A_r = 1 - (1 - top1) * decay^(r-1), pinned to exactly 1 at rank k.
// Convenient way to get a realistic profile with a chosen top-1 accuracy.
AccuracyProfile geometric_profile(std::size_t k, double top1, double decay);

struct SyntheticSpec {
  AccuracyProfile profile;   // class count = profile.k()
  double tail_decay = 0.9;   // in (0, 1): geometric decay of sorted probabilities
  double noise = 0.5;        // >= 0: lognormal jitter before re-sorting
  std::uint64_t seed = 0;

  void validate() const;
};

// Draws n examples whose rank statistics match the profile exactly by
// construction: each row gets a sorted probability vector (geometric decay
// with lognormal jitter, re-sorted), a uniform random rank-to-class
// assignment, and a true label whose rank is sampled straight from the
// profile's increments. Logits are the log-probabilities. Deterministic in
// (spec.seed, n) and independent of thread count.
LabeledDataset generate_dataset(const SyntheticSpec& spec, std::size_t n);

// Distribution of the rank-only (cons) prediction-set size under a
// perfectly matching profile: the size concentrates on {k - 1, k} with
// P(size = k) = p_k.
struct ConsSizeDistribution {
  std::size_t k = 0;   // the upper of the two realized sizes
  double p_k = 0.0;    // probability of realizing k rather than k - 1
};

// Smallest k with cumulative[k-1] >= 1 - alpha, and the interpolation
// weight p_k = (1 - alpha - A_{k-1}) / (A_k - A_{k-1}). Throws when
// 1 - alpha exceeds the profile's final value (no finite set suffices).
ConsSizeDistribution cons_size_distribution(const AccuracyProfile& profile,
                                            double alpha);

// Expected size (k - 1) + p_k of the distribution above.
double expected_cons_size(const AccuracyProfile& profile, double alpha);

}  // namespace cpl
