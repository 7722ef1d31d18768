#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cpl {

// Non-conformity score families. All four share the same calibration and
// prediction machinery; they differ only in how a (probability vector,
// rank, uniform draw) triple maps to a score.
//
//   kAps   cumulative probability mass above the label plus a randomized
//          share of the label's own mass
//   kCons  rank-only: gamma * (rank - 1 + u); probabilities beyond the
//          ordering are ignored
//   kRaps  kAps plus a linear penalty on ranks beyond k_reg
//   kSaps  the top probability plus a flat per-rank weight lambda beyond
//          rank one (rank one scores u * top probability)
enum class ScoreVariant { kAps, kCons, kRaps, kSaps };

std::string_view variant_name(ScoreVariant variant);
ScoreVariant variant_from_name(std::string_view name);  // "aps", "cons", ...

struct ScoreParams {
  ScoreVariant variant = ScoreVariant::kAps;
  double gamma = 1.0;   // kCons: positive scale; does not change sets
  double lambda = 0.1;  // kSaps: positive weight on ranks beyond the first
  double phi = 0.0;     // kRaps: nonnegative rank penalty
  int k_reg = 1;        // kRaps: ranks <= k_reg escape the penalty

  // Checks the fields the active variant uses; throws std::invalid_argument.
  void validate() const;
};

// One example's probability vector sorted once, then queried many times.
// Ranks are 1-based; ties in probability break toward the smaller class
// index, making the order a deterministic total order.
struct SortedPrediction {
  std::vector<std::uint32_t> order;  // position r-1 holds the class ranked r
  std::vector<double> probs;         // probabilities in rank order
  std::vector<double> cumulative;    // inclusive prefix sums of probs
  std::vector<std::uint32_t> rank;   // class index -> 1-based rank

  std::size_t k() const { return order.size(); }
  std::uint32_t rank_of(std::uint32_t label) const { return rank[label]; }
  double max_prob() const { return probs[0]; }
};

// probabilities must be a valid probability row (finite entries). k >= 2.
SortedPrediction sort_prediction(std::span<const double> probabilities);

// Score of the label at the given 1-based rank. u is the example's uniform
// draw in [0, 1], shared by every label of that example. Nondecreasing in
// rank for every variant, which the set-size search relies on.
double score_for_rank(const SortedPrediction& sorted, std::size_t rank,
                      double u, const ScoreParams& params);

// Same score keyed by class index instead of rank.
double score_for_label(const SortedPrediction& sorted, std::uint32_t label,
                       double u, const ScoreParams& params);

// Per-variant spellings of score_for_label.
double aps_score(const SortedPrediction& sorted, std::uint32_t label, double u);
double cons_score(const SortedPrediction& sorted, std::uint32_t label, double u,
                  double gamma);
double raps_score(const SortedPrediction& sorted, std::uint32_t label, double u,
                  double phi, int k_reg);
double saps_score(const SortedPrediction& sorted, std::uint32_t label, double u,
                  double lambda);

// Scores for every class of one example, indexed by class, all sharing the
// same draw u.
std::vector<double> scores_all_labels(const SortedPrediction& sorted, double u,
                                      const ScoreParams& params);

}  // namespace cpl
