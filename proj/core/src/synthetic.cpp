#include "cpl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cpl/parallel.hpp"
#include "cpl/rng.hpp"

namespace cpl {

void AccuracyProfile::validate() const {
  if (cumulative.size() < 2) {
    throw std::invalid_argument(
        "accuracy profile needs at least 2 entries (one per class)");
  }
  double previous = 0.0;
  for (std::size_t r = 0; r < cumulative.size(); ++r) {
    const double a = cumulative[r];
    if (!(a >= 0.0) || !(a <= 1.0)) {
      throw std::invalid_argument("accuracy profile entry " +
                                  std::to_string(r + 1) +
                                  " must lie in [0, 1]");
    }
    if (a < previous) {
      throw std::invalid_argument("accuracy profile must be nondecreasing; "
                                  "entry " + std::to_string(r + 1) +
                                  " drops below its predecessor");
    }
    previous = a;
  }
  if (cumulative.back() != 1.0) {
    throw std::invalid_argument(
        "accuracy profile must end at exactly 1 so every rank is reachable");
  }
}

AccuracyProfile geometric_profile(std::size_t k, double top1, double decay) {
  if (k < 2) {
    throw std::invalid_argument("geometric_profile: need at least 2 classes");
  }
  if (!(top1 > 0.0) || !(top1 <= 1.0)) {
    throw std::invalid_argument("geometric_profile: top1 must lie in (0, 1]");
  }
  if (!(decay > 0.0) || !(decay < 1.0)) {
    throw std::invalid_argument("geometric_profile: decay must lie in (0, 1)");
  }
  AccuracyProfile profile;
  profile.cumulative.resize(k);
  double miss = 1.0 - top1;
  for (std::size_t r = 0; r + 1 < k; ++r) {
    profile.cumulative[r] = 1.0 - miss;
    miss *= decay;
  }
  profile.cumulative[k - 1] = 1.0;
  profile.validate();
  return profile;
}

void SyntheticSpec::validate() const {
  profile.validate();
  if (!(tail_decay > 0.0) || !(tail_decay < 1.0)) {
    throw std::invalid_argument("synthetic spec: tail_decay must lie in (0, 1)");
  }
  if (!std::isfinite(noise) || noise < 0.0) {
    throw std::invalid_argument(
        "synthetic spec: noise must be nonnegative and finite");
  }
}

LabeledDataset generate_dataset(const SyntheticSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0) {
    throw std::invalid_argument("generate_dataset: need at least 1 example");
  }
  const std::size_t k = spec.profile.k();

  LabeledDataset dataset;
  dataset.logits.n = n;
  dataset.logits.k = k;
  dataset.logits.values.resize(n * k);
  dataset.labels.resize(n);

  const rng::CounterRng value_draws(spec.seed, rng::Stream::kSynthValue);
  const rng::CounterRng perm_draws(spec.seed, rng::Stream::kSynthPerm);
  const rng::CounterRng rank_draws(spec.seed, rng::Stream::kSynthRank);
  const double log_decay = std::log(spec.tail_decay);

  par::parallel_for(0, n, [&](std::size_t i) {
    // Log-weights: geometric decay plus lognormal jitter, re-sorted so the
    // vector is a proper descending probability profile for this row.
    std::vector<double> log_w(k);
    for (std::size_t r = 0; r < k; ++r) {
      const double g = value_draws.normal(i * k + r);
      log_w[r] = static_cast<double>(r) * log_decay + spec.noise * g;
    }
    std::sort(log_w.begin(), log_w.end(), std::greater<double>());

    // Normalize in log space; the result is the log-probability vector, so
    // it doubles directly as the row's logits.
    const double top = log_w[0];
    double sum = 0.0;
    for (double lw : log_w) sum += std::exp(lw - top);
    const double log_norm = top + std::log(sum);

    // Uniformly random assignment of ranks to class indices.
    std::vector<std::uint32_t> rank_to_class(k);
    std::iota(rank_to_class.begin(), rank_to_class.end(), std::uint32_t{0});
    for (std::size_t r = k - 1; r >= 1; --r) {
      const std::uint64_t j =
          perm_draws.below(i * k + (k - 1 - r), r + 1);
      std::swap(rank_to_class[r], rank_to_class[j]);
    }

    float* row = dataset.logits.values.data() + i * k;
    for (std::size_t r = 0; r < k; ++r) {
      row[rank_to_class[r]] = static_cast<float>(log_w[r] - log_norm);
    }

    // True label rank sampled from the profile's increments:
    // P(rank <= r) = cumulative[r-1].
    const double v = rank_draws.unit(i);
    const auto it = std::upper_bound(spec.profile.cumulative.begin(),
                                     spec.profile.cumulative.end(), v);
    const auto rank_index = static_cast<std::size_t>(
        it - spec.profile.cumulative.begin());
    dataset.labels[i] = rank_to_class[std::min(rank_index, k - 1)];
  });

  return dataset;
}

ConsSizeDistribution cons_size_distribution(const AccuracyProfile& profile,
                                            double alpha) {
  if (profile.cumulative.empty()) {
    throw std::invalid_argument("cons_size_distribution: empty profile");
  }
  double previous = 0.0;
  for (double a : profile.cumulative) {
    if (!(a >= 0.0) || !(a <= 1.0) || a < previous) {
      throw std::invalid_argument(
          "cons_size_distribution: profile must be nondecreasing in [0, 1]");
    }
    previous = a;
  }
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument(
        "cons_size_distribution: alpha must lie strictly in (0, 1)");
  }

  const double target = 1.0 - alpha;
  if (target > profile.cumulative.back()) {
    throw std::invalid_argument(
        "cons_size_distribution: infeasible, 1 - alpha exceeds the profile's "
        "final coverage");
  }

  const auto it = std::lower_bound(profile.cumulative.begin(),
                                   profile.cumulative.end(), target);
  const auto index =
      static_cast<std::size_t>(it - profile.cumulative.begin());
  const double below = index == 0 ? 0.0 : profile.cumulative[index - 1];

  ConsSizeDistribution distribution;
  distribution.k = index + 1;
  distribution.p_k = (target - below) / (profile.cumulative[index] - below);
  return distribution;
}

double expected_cons_size(const AccuracyProfile& profile, double alpha) {
  const ConsSizeDistribution d = cons_size_distribution(profile, alpha);
  return static_cast<double>(d.k - 1) + d.p_k;
}

}  // namespace cpl
