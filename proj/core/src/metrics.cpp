#include "cpl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace cpl {

namespace {

using Json = nlohmann::ordered_json;

void check_lengths(std::size_t sets, std::size_t labels, const char* what) {
  if (sets != labels) {
    throw std::invalid_argument(std::string(what) + ": " +
                                std::to_string(sets) + " sets but " +
                                std::to_string(labels) + " companion values");
  }
}

void check_nonempty(std::size_t n, const char* what) {
  if (n == 0) {
    throw std::invalid_argument(std::string(what) + ": no examples");
  }
}

void check_partition(std::span<const SizeBucket> partition) {
  if (partition.empty()) {
    throw std::invalid_argument("stratum partition must not be empty");
  }
  for (std::size_t i = 0; i < partition.size(); ++i) {
    if (partition[i].lo > partition[i].hi) {
      throw std::invalid_argument("stratum partition bucket " +
                                  std::to_string(i) + " has lo > hi");
    }
    if (i > 0 && partition[i].lo <= partition[i - 1].hi) {
      throw std::invalid_argument("stratum partition buckets must be "
                                  "disjoint and increasing");
    }
  }
}

// Index of the bucket holding `value`; the last bucket absorbs overflow.
// Values below every bucket (possible when the partition starts above 0)
// return npos and are skipped.
std::size_t bucket_index(std::span<const SizeBucket> partition,
                         std::size_t value) {
  for (std::size_t i = 0; i < partition.size(); ++i) {
    if (value < partition[i].lo) return static_cast<std::size_t>(-1);
    if (value <= partition[i].hi) return i;
  }
  return partition.size() - 1;
}

std::string bucket_label(const SizeBucket& bucket) {
  if (bucket.lo == bucket.hi) return std::to_string(bucket.lo);
  return std::to_string(bucket.lo) + "-" + std::to_string(bucket.hi);
}

}  // namespace

double coverage(std::span<const PredictionSet> sets,
                std::span<const std::uint32_t> labels) {
  check_lengths(sets.size(), labels.size(), "coverage");
  check_nonempty(sets.size(), "coverage");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].contains(labels[i])) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(sets.size());
}

double average_set_size(std::span<const PredictionSet> sets) {
  check_nonempty(sets.size(), "average_set_size");
  // Sizes are integers, so plain accumulation is exact up to 2^53.
  double total = 0.0;
  for (const PredictionSet& set : sets) {
    total += static_cast<double>(set.size());
  }
  return total / static_cast<double>(sets.size());
}

double empty_set_rate(std::span<const PredictionSet> sets) {
  check_nonempty(sets.size(), "empty_set_rate");
  std::size_t empty = 0;
  for (const PredictionSet& set : sets) {
    if (set.size() == 0) ++empty;
  }
  return static_cast<double>(empty) / static_cast<double>(sets.size());
}

double escv(std::span<const PredictionSet> sets,
            std::span<const std::uint32_t> labels, double alpha,
            std::size_t k) {
  check_lengths(sets.size(), labels.size(), "escv");
  check_nonempty(sets.size(), "escv");
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("escv: alpha must lie strictly in (0, 1)");
  }

  std::vector<std::size_t> count(k + 1, 0);
  std::vector<std::size_t> covered(k + 1, 0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const std::size_t size = sets[i].size();
    if (size > k) {
      throw std::invalid_argument("escv: set size exceeds the class count");
    }
    count[size] += 1;
    covered[size] += sets[i].contains(labels[i]) ? 1 : 0;
  }

  double worst = 0.0;
  for (std::size_t size = 1; size <= k; ++size) {
    if (count[size] == 0) continue;
    const double cov = static_cast<double>(covered[size]) /
                       static_cast<double>(count[size]);
    worst = std::max(worst, (1.0 - alpha) - cov);
  }
  return worst;
}

double sscv(std::span<const PredictionSet> sets,
            std::span<const std::uint32_t> labels, double alpha,
            std::span<const SizeBucket> partition) {
  check_lengths(sets.size(), labels.size(), "sscv");
  check_nonempty(sets.size(), "sscv");
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("sscv: alpha must lie strictly in (0, 1)");
  }
  check_partition(partition);

  std::vector<std::size_t> count(partition.size(), 0);
  std::vector<std::size_t> covered(partition.size(), 0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const std::size_t bucket = bucket_index(partition, sets[i].size());
    if (bucket == static_cast<std::size_t>(-1)) continue;
    count[bucket] += 1;
    covered[bucket] += sets[i].contains(labels[i]) ? 1 : 0;
  }

  double worst = 0.0;
  for (std::size_t b = 0; b < partition.size(); ++b) {
    if (count[b] == 0) continue;
    const double cov =
        static_cast<double>(covered[b]) / static_cast<double>(count[b]);
    worst = std::max(worst, std::fabs(cov - (1.0 - alpha)));
  }
  return worst;
}

std::vector<SizeStratum> size_by_difficulty(
    std::span<const PredictionSet> sets,
    std::span<const std::uint32_t> true_ranks,
    std::span<const SizeBucket> partition) {
  check_lengths(sets.size(), true_ranks.size(), "size_by_difficulty");
  check_nonempty(sets.size(), "size_by_difficulty");
  check_partition(partition);

  std::vector<double> size_sum(partition.size(), 0.0);
  std::vector<std::size_t> count(partition.size(), 0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const std::size_t bucket = bucket_index(partition, true_ranks[i]);
    if (bucket == static_cast<std::size_t>(-1)) continue;
    size_sum[bucket] += static_cast<double>(sets[i].size());
    count[bucket] += 1;
  }

  std::vector<SizeStratum> strata;
  for (std::size_t b = 0; b < partition.size(); ++b) {
    if (count[b] == 0) continue;
    strata.push_back({bucket_label(partition[b]),
                      size_sum[b] / static_cast<double>(count[b]), count[b]});
  }
  return strata;
}

MetricsReport compute_metrics(std::span<const PredictionSet> sets,
                              std::span<const std::uint32_t> labels,
                              std::span<const std::uint32_t> true_ranks,
                              double alpha, std::size_t k) {
  MetricsReport report;
  report.alpha = alpha;
  report.n_test = sets.size();
  report.coverage = coverage(sets, labels);
  report.avg_size = average_set_size(sets);
  report.escv = escv(sets, labels, alpha, k);
  report.sscv = sscv(sets, labels, alpha);
  report.empty_set_rate = empty_set_rate(sets);
  report.size_by_difficulty = size_by_difficulty(sets, true_ranks);
  return report;
}

std::string MetricsReport::to_json_string() const {
  Json out;
  out["alpha"] = alpha;
  out["n_test"] = n_test;
  out["coverage"] = coverage;
  out["avg_size"] = avg_size;
  out["escv"] = escv;
  out["sscv"] = sscv;
  out["empty_set_rate"] = empty_set_rate;
  Json strata = Json::object();
  for (const SizeStratum& stratum : size_by_difficulty) {
    Json entry;
    entry["mean_size"] = stratum.mean_size;
    entry["count"] = stratum.count;
    strata[stratum.bucket] = entry;
  }
  out["size_by_difficulty"] = strata;
  return out.dump();
}

std::vector<MspBin> msp_rank_profile(std::span<const double> max_probs,
                                     std::span<const std::uint32_t> true_ranks,
                                     int bins) {
  if (max_probs.size() != true_ranks.size()) {
    throw std::invalid_argument("msp_rank_profile: length mismatch");
  }
  check_nonempty(max_probs.size(), "msp_rank_profile");
  if (bins < 1) {
    throw std::invalid_argument("msp_rank_profile: need >= 1 bin");
  }

  std::vector<double> rank_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < max_probs.size(); ++i) {
    const double p = max_probs[i];
    if (!(p >= 0.0) || !(p <= 1.0)) {
      throw std::invalid_argument("msp_rank_profile: probability out of [0, 1]");
    }
    int bin = 0;
    if (p > 0.0) {
      bin = static_cast<int>(std::ceil(p * bins)) - 1;
      bin = std::clamp(bin, 0, bins - 1);
    }
    rank_sum[static_cast<std::size_t>(bin)] +=
        static_cast<double>(true_ranks[i]);
    count[static_cast<std::size_t>(bin)] += 1;
  }

  std::vector<MspBin> profile;
  const double width = 1.0 / bins;
  for (int b = 0; b < bins; ++b) {
    const auto idx = static_cast<std::size_t>(b);
    if (count[idx] == 0) continue;
    profile.push_back({b * width, (b + 1) * width, count[idx],
                       rank_sum[idx] / static_cast<double>(count[idx])});
  }
  return profile;
}

}  // namespace cpl
