#include "cpl/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cpl {

namespace {

void check_u(double u) {
  if (!(u >= 0.0) || !(u <= 1.0)) {
    throw std::invalid_argument("uniform draw must lie in [0, 1]");
  }
}

void check_rank(const SortedPrediction& sorted, std::size_t rank) {
  if (rank < 1 || rank > sorted.k()) {
    throw std::invalid_argument("rank " + std::to_string(rank) +
                                " out of range [1, " +
                                std::to_string(sorted.k()) + "]");
  }
}

}  // namespace

std::string_view variant_name(ScoreVariant variant) {
  switch (variant) {
    case ScoreVariant::kAps:
      return "aps";
    case ScoreVariant::kCons:
      return "cons";
    case ScoreVariant::kRaps:
      return "raps";
    case ScoreVariant::kSaps:
      return "saps";
  }
  throw std::invalid_argument("unknown score variant");
}

ScoreVariant variant_from_name(std::string_view name) {
  if (name == "aps") return ScoreVariant::kAps;
  if (name == "cons") return ScoreVariant::kCons;
  if (name == "raps") return ScoreVariant::kRaps;
  if (name == "saps") return ScoreVariant::kSaps;
  throw std::invalid_argument("unknown score variant '" + std::string(name) +
                              "'; expected aps, cons, raps, or saps");
}

void ScoreParams::validate() const {
  switch (variant) {
    case ScoreVariant::kAps:
      return;
    case ScoreVariant::kCons:
      if (!std::isfinite(gamma) || gamma <= 0.0) {
        throw std::invalid_argument("cons: gamma must be positive and finite");
      }
      return;
    case ScoreVariant::kRaps:
      if (!std::isfinite(phi) || phi < 0.0) {
        throw std::invalid_argument(
            "raps: phi must be nonnegative and finite");
      }
      if (k_reg < 0) {
        throw std::invalid_argument("raps: k_reg must be nonnegative");
      }
      return;
    case ScoreVariant::kSaps:
      if (!std::isfinite(lambda) || lambda <= 0.0) {
        throw std::invalid_argument(
            "saps: lambda must be positive and finite");
      }
      return;
  }
  throw std::invalid_argument("unknown score variant");
}

SortedPrediction sort_prediction(std::span<const double> probabilities) {
  const std::size_t k = probabilities.size();
  if (k < 2) {
    throw std::invalid_argument("sort_prediction: need at least 2 classes");
  }
  for (double p : probabilities) {
    if (!std::isfinite(p)) {
      throw std::invalid_argument(
          "sort_prediction: probability entry is not finite");
    }
  }

  SortedPrediction sorted;
  sorted.order.resize(k);
  std::iota(sorted.order.begin(), sorted.order.end(), std::uint32_t{0});
  std::sort(sorted.order.begin(), sorted.order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (probabilities[a] != probabilities[b]) {
                return probabilities[a] > probabilities[b];
              }
              return a < b;
            });

  sorted.probs.resize(k);
  sorted.cumulative.resize(k);
  sorted.rank.resize(k);
  double running = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    sorted.probs[r] = probabilities[sorted.order[r]];
    running += sorted.probs[r];
    sorted.cumulative[r] = running;
    sorted.rank[sorted.order[r]] = static_cast<std::uint32_t>(r + 1);
  }
  return sorted;
}

double score_for_rank(const SortedPrediction& sorted, std::size_t rank,
                      double u, const ScoreParams& params) {
  check_rank(sorted, rank);
  check_u(u);
  params.validate();

  switch (params.variant) {
    case ScoreVariant::kAps:
      return (rank >= 2 ? sorted.cumulative[rank - 2] : 0.0) +
             u * sorted.probs[rank - 1];
    case ScoreVariant::kCons:
      return params.gamma * (static_cast<double>(rank - 1) + u);
    case ScoreVariant::kRaps: {
      const double base = (rank >= 2 ? sorted.cumulative[rank - 2] : 0.0) +
                          u * sorted.probs[rank - 1];
      const std::size_t k_reg = static_cast<std::size_t>(params.k_reg);
      const double penalty =
          rank > k_reg ? static_cast<double>(rank - k_reg) : 0.0;
      return base + params.phi * penalty;
    }
    case ScoreVariant::kSaps:
      if (rank == 1) return u * sorted.max_prob();
      return sorted.max_prob() +
             (static_cast<double>(rank - 2) + u) * params.lambda;
  }
  throw std::invalid_argument("unknown score variant");
}

double score_for_label(const SortedPrediction& sorted, std::uint32_t label,
                       double u, const ScoreParams& params) {
  if (label >= sorted.k()) {
    throw std::invalid_argument("label " + std::to_string(label) +
                                " out of range [0, " +
                                std::to_string(sorted.k()) + ")");
  }
  return score_for_rank(sorted, sorted.rank_of(label), u, params);
}

double aps_score(const SortedPrediction& sorted, std::uint32_t label,
                 double u) {
  ScoreParams params;
  params.variant = ScoreVariant::kAps;
  return score_for_label(sorted, label, u, params);
}

double cons_score(const SortedPrediction& sorted, std::uint32_t label, double u,
                  double gamma) {
  ScoreParams params;
  params.variant = ScoreVariant::kCons;
  params.gamma = gamma;
  return score_for_label(sorted, label, u, params);
}

double raps_score(const SortedPrediction& sorted, std::uint32_t label, double u,
                  double phi, int k_reg) {
  ScoreParams params;
  params.variant = ScoreVariant::kRaps;
  params.phi = phi;
  params.k_reg = k_reg;
  return score_for_label(sorted, label, u, params);
}

double saps_score(const SortedPrediction& sorted, std::uint32_t label, double u,
                  double lambda) {
  ScoreParams params;
  params.variant = ScoreVariant::kSaps;
  params.lambda = lambda;
  return score_for_label(sorted, label, u, params);
}

std::vector<double> scores_all_labels(const SortedPrediction& sorted, double u,
                                      const ScoreParams& params) {
  std::vector<double> scores(sorted.k());
  for (std::size_t r = 1; r <= sorted.k(); ++r) {
    scores[sorted.order[r - 1]] = score_for_rank(sorted, r, u, params);
  }
  return scores;
}

}  // namespace cpl
