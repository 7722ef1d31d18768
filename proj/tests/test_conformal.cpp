#include "cpl/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cpl/dataset.hpp"
#include "cpl/errors.hpp"
#include "cpl/rng.hpp"
#include "cpl/scores.hpp"
#include "testutil.hpp"

namespace {

using cpl::CalibrationRecord;
using cpl::conformal_quantile;
using cpl::PipelineConfig;
using cpl::predict_set;
using cpl::PredictionSet;
using cpl::ScoreParams;
using cpl::ScoreVariant;
using cpl::set_size_closed_form;
// Wrapper so call sites can pass braced probability lists.
cpl::SortedPrediction sort_prediction(const std::vector<double>& probs) {
  return cpl::sort_prediction(probs);
}
using cpl::SortedPrediction;
using cpl::TemperatureMode;
using cpl::Threshold;
using cpl::rng::CounterRng;
using cpl::rng::Stream;
using cpltest::probs_from_rows;

std::vector<double> random_prob_row(std::size_t k, std::uint64_t salt) {
  const CounterRng rng(salt, Stream::kSynthValue);
  std::vector<double> row(k);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    row[j] = -std::log(rng.unit_open(j));
    sum += row[j];
  }
  for (double& p : row) p /= sum;
  return row;
}

cpl::LabeledDataset random_logit_dataset(std::size_t n, std::size_t k,
                                         std::uint64_t seed) {
  const CounterRng value_rng(seed, Stream::kSynthValue);
  const CounterRng label_rng(seed, Stream::kSynthRank);
  cpl::LabeledDataset d;
  d.logits.n = n;
  d.logits.k = k;
  d.logits.values.resize(n * k);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      d.logits.values[i * k + j] =
          static_cast<float>(2.0 * value_rng.normal(i * k + j));
    }
    d.labels[i] = static_cast<std::uint32_t>(label_rng.below(i, k));
  }
  return d;
}

ScoreParams make_params(ScoreVariant variant) {
  ScoreParams p;
  p.variant = variant;
  p.gamma = 1.0;
  p.lambda = 0.2;
  p.phi = 0.1;
  p.k_reg = 1;
  return p;
}

// --- conformal_quantile -----------------------------------------------------

TEST(ConformalQuantile, HandExamples) {
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.4};
  const Threshold t = conformal_quantile(scores, 0.5);  // m = ceil(5*0.5) = 3
  EXPECT_FALSE(t.infinite());
  EXPECT_DOUBLE_EQ(t.value, 0.3);
}

TEST(ConformalQuantile, SmallSampleFallsBackToInfinity) {
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.4};
  // m = ceil(5 * 0.95) = 5 > 4.
  EXPECT_TRUE(conformal_quantile(scores, 0.05).infinite());
}

TEST(ConformalQuantile, DegenerateScores) {
  const std::vector<double> scores(10, 0.7);
  EXPECT_DOUBLE_EQ(conformal_quantile(scores, 0.3).value, 0.7);
}

TEST(ConformalQuantile, SingleScore) {
  const std::vector<double> one{0.5};
  // n=1: m = ceil(2 * 0.4) = 1 <= 1 at alpha = 0.6.
  EXPECT_DOUBLE_EQ(conformal_quantile(one, 0.6).value, 0.5);
  // alpha = 0.4: m = ceil(2 * 0.6) = 2 > 1.
  EXPECT_TRUE(conformal_quantile(one, 0.4).infinite());
}

TEST(ConformalQuantile, InputsAreNotReordered) {
  std::vector<double> scores{0.4, 0.1, 0.3, 0.2};
  const std::vector<double> copy = scores;
  conformal_quantile(scores, 0.5);
  EXPECT_EQ(scores, copy);
}

// Brute-force reference: the smallest candidate s among the scores such that
// at least m of them are <= s; +infinity when even the largest score has
// fewer than m at or below it (m > n).
Threshold quantile_by_scan(std::vector<double> scores, double alpha) {
  const std::size_t n = scores.size();
  const double m = std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha));
  std::sort(scores.begin(), scores.end());
  for (std::size_t idx = 0; idx < n; ++idx) {
    const double s = scores[idx];
    const auto at_or_below = static_cast<double>(
        std::upper_bound(scores.begin(), scores.end(), s) - scores.begin());
    if (at_or_below >= m) return Threshold{s};
  }
  return Threshold{};
}

TEST(ConformalQuantile, MatchesBruteForceScan) {
  std::uint64_t salt = 0;
  const CounterRng rng(404, Stream::kTuning);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(salt++, 40);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Draw from a small discrete set so duplicates are common.
      scores[i] = 0.1 * static_cast<double>(rng.below(salt++, 12));
    }
    const double alpha = 0.02 + 0.96 * rng.unit(salt++);
    const Threshold expected = quantile_by_scan(scores, alpha);
    const Threshold actual = conformal_quantile(scores, alpha);
    ASSERT_EQ(actual.infinite(), expected.infinite())
        << "trial " << trial << " n " << n << " alpha " << alpha;
    if (!expected.infinite()) {
      ASSERT_EQ(actual.value, expected.value) << "trial " << trial;
    }
  }
}

TEST(ConformalQuantile, RejectsBadInputs) {
  EXPECT_THROW(conformal_quantile({}, 0.1), std::invalid_argument);
  const std::vector<double> ok{0.5};
  EXPECT_THROW(conformal_quantile(ok, 0.0), std::invalid_argument);
  EXPECT_THROW(conformal_quantile(ok, 1.0), std::invalid_argument);
  const std::vector<double> with_nan{
      0.5, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(conformal_quantile(with_nan, 0.5), std::invalid_argument);
}

// --- predict_set -------------------------------------------------------------

TEST(PredictSet, CumulativeHandExample) {
  // Scores at u = 0.5: rank 1 -> 0.30, rank 2 -> 0.75, rank 3 -> 0.95.
  const SortedPrediction sp = sort_prediction({0.6, 0.3, 0.1});
  const PredictionSet set =
      predict_set(sp, 0.5, Threshold{0.75}, make_params(ScoreVariant::kAps));
  EXPECT_EQ(set.members, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_TRUE(set.contains(0));
  EXPECT_TRUE(set.contains(1));
  EXPECT_FALSE(set.contains(2));
}

TEST(PredictSet, InfiniteThresholdKeepsEverything) {
  const SortedPrediction sp = sort_prediction(random_prob_row(9, 1));
  for (ScoreVariant variant : {ScoreVariant::kAps, ScoreVariant::kCons,
                               ScoreVariant::kRaps, ScoreVariant::kSaps}) {
    const PredictionSet set =
        predict_set(sp, 0.3, Threshold{}, make_params(variant));
    EXPECT_EQ(set.size(), 9u);
  }
}

TEST(PredictSet, TopProbabilityVariantCanReturnEmpty) {
  // Rank-1 score is u * 0.6 = 0.54 > tau = 0.5, so nothing survives.
  const SortedPrediction sp = sort_prediction({0.6, 0.3, 0.1});
  const PredictionSet set =
      predict_set(sp, 0.9, Threshold{0.5}, make_params(ScoreVariant::kSaps));
  EXPECT_EQ(set.size(), 0u);
}

TEST(PredictSet, MembersAreAscendingRankPrefix) {
  for (std::uint64_t salt : {3ull, 4ull, 5ull}) {
    const SortedPrediction sp = sort_prediction(random_prob_row(12, salt));
    const CounterRng rng(salt, Stream::kTuning);
    for (int trial = 0; trial < 50; ++trial) {
      const double u = rng.unit(2 * trial);
      const double tau = 1.5 * rng.unit(2 * trial + 1);
      for (ScoreVariant variant :
           {ScoreVariant::kAps, ScoreVariant::kCons, ScoreVariant::kRaps,
            ScoreVariant::kSaps}) {
        const PredictionSet set =
            predict_set(sp, u, Threshold{tau}, make_params(variant));
        ASSERT_TRUE(std::is_sorted(set.members.begin(), set.members.end()));
        // The members must be exactly the top-size ranks.
        std::vector<std::uint32_t> prefix(
            sp.order.begin(), sp.order.begin() + set.size());
        std::sort(prefix.begin(), prefix.end());
        ASSERT_EQ(set.members, prefix);
      }
    }
  }
}

TEST(PredictSet, NestingInThreshold) {
  const CounterRng rng(77, Stream::kTuning);
  std::uint64_t salt = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const SortedPrediction sp =
        sort_prediction(random_prob_row(8, 100 + trial));
    const double u = rng.unit(salt++);
    double t1 = 2.0 * rng.unit(salt++);
    double t2 = 2.0 * rng.unit(salt++);
    if (t1 > t2) std::swap(t1, t2);
    for (ScoreVariant variant : {ScoreVariant::kAps, ScoreVariant::kCons,
                                 ScoreVariant::kRaps, ScoreVariant::kSaps}) {
      const ScoreParams p = make_params(variant);
      const PredictionSet narrow = predict_set(sp, u, Threshold{t1}, p);
      const PredictionSet wide = predict_set(sp, u, Threshold{t2}, p);
      ASSERT_TRUE(std::includes(wide.members.begin(), wide.members.end(),
                                narrow.members.begin(), narrow.members.end()))
          << "trial " << trial;
    }
  }
}

// --- set_size_closed_form ------------------------------------------------------

TEST(SetSizeClosedForm, RankOnlyHandExample) {
  const SortedPrediction sp = sort_prediction(random_prob_row(10, 6));
  ScoreParams p = make_params(ScoreVariant::kCons);
  p.gamma = 1.0;
  // Ranks with o - 1 + 0.5 <= 2.4: o in {1, 2}.
  EXPECT_EQ(set_size_closed_form(sp, 0.5, Threshold{2.4}, p), 2u);
}

TEST(SetSizeClosedForm, TopProbabilityEmptyExample) {
  const SortedPrediction sp = sort_prediction({0.6, 0.3, 0.1});
  EXPECT_EQ(set_size_closed_form(sp, 0.9, Threshold{0.5},
                                 make_params(ScoreVariant::kSaps)),
            0u);
}

TEST(SetSizeClosedForm, InfiniteThresholdIsFullSize) {
  const SortedPrediction sp = sort_prediction(random_prob_row(7, 8));
  for (ScoreVariant variant : {ScoreVariant::kAps, ScoreVariant::kCons,
                               ScoreVariant::kRaps, ScoreVariant::kSaps}) {
    EXPECT_EQ(set_size_closed_form(sp, 0.1, Threshold{}, make_params(variant)),
              7u);
  }
}

TEST(SetSizeClosedForm, AgreesWithNaiveEnumeration) {
  const CounterRng rng(31, Stream::kTuning);
  std::uint64_t salt = 0;
  for (int trial = 0; trial < 4000; ++trial) {
    const std::size_t k = 2 + rng.below(salt++, 30);
    const SortedPrediction sp =
        sort_prediction(random_prob_row(k, 500 + trial));
    const double u = rng.unit(salt++);
    for (ScoreVariant variant : {ScoreVariant::kAps, ScoreVariant::kCons,
                                 ScoreVariant::kRaps, ScoreVariant::kSaps}) {
      const ScoreParams p = make_params(variant);
      double tau_value;
      if (trial % 3 == 0) {
        // Exercise exact boundaries: tau equals some label's score.
        const std::size_t rank = 1 + rng.below(salt++, k);
        tau_value = cpl::score_for_rank(sp, rank, u, p);
      } else {
        tau_value = 3.0 * rng.unit(salt++) - 0.5;
      }
      const Threshold tau{tau_value};
      ASSERT_EQ(set_size_closed_form(sp, u, tau, p),
                predict_set(sp, u, tau, p).size())
          << cpl::variant_name(variant) << " trial " << trial << " tau "
          << tau_value;
    }
  }
}

// --- calibration_scores --------------------------------------------------------

TEST(CalibrationScores, RankOnlyWithForcedDraws) {
  // Every label sits at rank 1; with u forced to 0.5 every score is 0.5.
  const auto probs = probs_from_rows(
      {{0.7, 0.2, 0.1}, {0.6, 0.3, 0.1}, {0.5, 0.3, 0.2}});
  const std::vector<std::uint32_t> labels{0, 0, 0};
  const auto scores = cpl::calibration_scores(
      probs, labels, make_params(ScoreVariant::kCons),
      [](std::size_t) { return 0.5; });
  ASSERT_EQ(scores.size(), 3u);
  for (double s : scores) EXPECT_DOUBLE_EQ(s, 0.5);
}

TEST(CalibrationScores, OneHotRowsReproduceTheDraws) {
  // One-hot rows with correct labels make the cumulative score u * 1.
  const auto probs = probs_from_rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}});
  const std::vector<std::uint32_t> labels{0, 1, 0};
  const std::uint64_t seed = 99;
  const auto scores = cpl::calibration_scores(
      probs, labels, make_params(ScoreVariant::kAps), seed);
  const CounterRng rng(seed, Stream::kCalibration);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(scores[i], rng.unit(i) * 1.0);
  }
}

TEST(CalibrationScores, TopProbabilityFixture) {
  // Hand-evaluated with u = 0.25 for all rows, lambda = 0.2:
  //   row 0: label rank 1, top 0.6          -> 0.25 * 0.6 = 0.15
  //   row 1: label rank 2, top 0.6          -> 0.6 + (0 + 0.25) * 0.2 = 0.65
  //   row 2: label rank 3 (tie by index), top 0.5
  //                                         -> 0.5 + (1 + 0.25) * 0.2 = 0.75
  const auto probs = probs_from_rows(
      {{0.6, 0.3, 0.1}, {0.3, 0.6, 0.1}, {0.5, 0.25, 0.25}});
  const std::vector<std::uint32_t> labels{0, 0, 2};
  ScoreParams p = make_params(ScoreVariant::kSaps);
  const auto scores =
      cpl::calibration_scores(probs, labels, p,
                              [](std::size_t) { return 0.25; });
  ASSERT_EQ(scores.size(), 3u);
  EXPECT_DOUBLE_EQ(scores[0], 0.15);
  EXPECT_DOUBLE_EQ(scores[1], 0.65);
  EXPECT_DOUBLE_EQ(scores[2], 0.75);
}

TEST(CalibrationScores, SeededOverloadIsDeterministicPerStream) {
  const auto probs = probs_from_rows(
      {{0.7, 0.2, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}});
  const std::vector<std::uint32_t> labels{0, 1, 2};
  const ScoreParams p = make_params(ScoreVariant::kAps);
  const auto a = cpl::calibration_scores(probs, labels, p, 5);
  const auto b = cpl::calibration_scores(probs, labels, p, 5);
  EXPECT_EQ(a, b);
  const auto other_stream =
      cpl::calibration_scores(probs, labels, p, 5, Stream::kTuning);
  EXPECT_NE(a, other_stream);
}

TEST(CalibrationScores, LengthMismatchRejected) {
  const auto probs = probs_from_rows({{0.7, 0.3}});
  const std::vector<std::uint32_t> labels{0, 1};
  EXPECT_THROW(cpl::calibration_scores(probs, labels,
                                       make_params(ScoreVariant::kAps), 1),
               std::invalid_argument);
}

// --- record serialization -------------------------------------------------------

CalibrationRecord sample_record() {
  CalibrationRecord record;
  record.alpha = 0.1;
  record.params = make_params(ScoreVariant::kSaps);
  record.params.lambda = 0.35;
  record.temperature = 1.25;
  record.tau = Threshold{0.8125};
  record.n_calibration = 1600;
  record.seed = 42;
  record.n_classes = 10;
  record.tuned_from = cpl::TunedFrom{{0.02, 0.35, 0.6}, 400};
  return record;
}

TEST(Record, JsonRoundTripPreservesEveryField) {
  const CalibrationRecord record = sample_record();
  const CalibrationRecord back =
      CalibrationRecord::from_json_string(record.to_json_string());
  EXPECT_EQ(back.alpha, record.alpha);
  EXPECT_EQ(back.params.variant, record.params.variant);
  EXPECT_EQ(back.params.lambda, record.params.lambda);
  EXPECT_EQ(back.temperature, record.temperature);
  EXPECT_EQ(back.tau.value, record.tau.value);
  EXPECT_EQ(back.n_calibration, record.n_calibration);
  EXPECT_EQ(back.seed, record.seed);
  ASSERT_TRUE(back.n_classes.has_value());
  EXPECT_EQ(*back.n_classes, 10u);
  ASSERT_TRUE(back.tuned_from.has_value());
  EXPECT_EQ(back.tuned_from->grid, record.tuned_from->grid);
  EXPECT_EQ(back.tuned_from->n_validation, 400u);
}

TEST(Record, InfiniteThresholdSerializesAsString) {
  CalibrationRecord record = sample_record();
  record.tau = Threshold{};
  const std::string json = record.to_json_string();
  EXPECT_NE(json.find("\"inf\""), std::string::npos) << json;
  const CalibrationRecord back = CalibrationRecord::from_json_string(json);
  EXPECT_TRUE(back.tau.infinite());
}

TEST(Record, UntunedRecordOmitsTuning) {
  CalibrationRecord record = sample_record();
  record.params = make_params(ScoreVariant::kAps);
  record.tuned_from.reset();
  const std::string json = record.to_json_string();
  EXPECT_EQ(json.find("tuned_from"), std::string::npos) << json;
  // A cumulative-variant record carries no hyperparameter keys at all.
  EXPECT_EQ(json.find("lambda"), std::string::npos) << json;
  EXPECT_EQ(json.find("gamma"), std::string::npos) << json;
  const CalibrationRecord back = CalibrationRecord::from_json_string(json);
  EXPECT_FALSE(back.tuned_from.has_value());
  EXPECT_EQ(back.params.variant, ScoreVariant::kAps);
}

TEST(Record, MissingClassCountStillLoads) {
  const std::string json =
      R"({"alpha":0.1,"variant":"cons","gamma":1.0,"temperature":1.0,)"
      R"("tau":0.5,"n_calibration":100,"seed":0})";
  const CalibrationRecord record = CalibrationRecord::from_json_string(json);
  EXPECT_FALSE(record.n_classes.has_value());
  EXPECT_EQ(record.params.variant, ScoreVariant::kCons);
  EXPECT_DOUBLE_EQ(record.tau.value, 0.5);
}

TEST(Record, MalformedInputsRaiseParseErrors) {
  const std::vector<std::string> bad = {
      "not json at all",
      "{}",
      // alpha out of range
      R"({"alpha":1.5,"variant":"aps","temperature":1.0,"tau":0.5,)"
      R"("n_calibration":10,"seed":0})",
      // unknown variant
      R"({"alpha":0.1,"variant":"thr","temperature":1.0,"tau":0.5,)"
      R"("n_calibration":10,"seed":0})",
      // tau neither number nor "inf"
      R"({"alpha":0.1,"variant":"aps","temperature":1.0,"tau":"huge",)"
      R"("n_calibration":10,"seed":0})",
      // zero calibration rows
      R"({"alpha":0.1,"variant":"aps","temperature":1.0,"tau":0.5,)"
      R"("n_calibration":0,"seed":0})",
      // non-positive temperature
      R"({"alpha":0.1,"variant":"aps","temperature":0.0,"tau":0.5,)"
      R"("n_calibration":10,"seed":0})",
      // cons needs a positive gamma
      R"({"alpha":0.1,"variant":"cons","gamma":-1.0,"temperature":1.0,)"
      R"("tau":0.5,"n_calibration":10,"seed":0})",
      // saps without lambda
      R"({"alpha":0.1,"variant":"saps","temperature":1.0,"tau":0.5,)"
      R"("n_calibration":10,"seed":0})",
      // class count too small
      R"({"alpha":0.1,"variant":"aps","temperature":1.0,"tau":0.5,)"
      R"("n_calibration":10,"seed":0,"k":1})",
  };
  for (const std::string& json : bad) {
    EXPECT_THROW(CalibrationRecord::from_json_string(json), cpl::ParseError)
        << json;
  }
}

// --- default grids ---------------------------------------------------------------

TEST(DefaultGrid, PinnedValues) {
  const auto raps = cpl::default_tuning_grid(ScoreVariant::kRaps);
  const std::vector<double> raps_expected{
      0.001, 0.01, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  EXPECT_EQ(std::vector<double>(raps.begin(), raps.end()), raps_expected);

  const auto saps = cpl::default_tuning_grid(ScoreVariant::kSaps);
  const std::vector<double> saps_expected{
      0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6};
  EXPECT_EQ(std::vector<double>(saps.begin(), saps.end()), saps_expected);

  EXPECT_THROW(cpl::default_tuning_grid(ScoreVariant::kAps),
               std::invalid_argument);
  EXPECT_THROW(cpl::default_tuning_grid(ScoreVariant::kCons),
               std::invalid_argument);
}

// --- tuning ----------------------------------------------------------------------

cpl::ProbabilityMatrix mixed_confidence_probs(std::size_t n,
                                              std::vector<std::uint32_t>& labels,
                                              std::size_t& n_unconfident) {
  // 80% confident rows whose label is rank 1, 20% unconfident rows whose
  // label is rank 2. With k = 3 a small lambda keeps confident rows' sets
  // near size 1 while a huge lambda must admit rank 2 for half of all rows.
  std::vector<std::vector<double>> rows;
  labels.clear();
  n_unconfident = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 5 == 0) {
      rows.push_back({0.40, 0.35, 0.25});
      labels.push_back(1);
      ++n_unconfident;
    } else {
      rows.push_back({0.90, 0.07, 0.03});
      labels.push_back(0);
    }
  }
  return probs_from_rows(rows);
}

TEST(Tune, SingletonGridReturnsItsElement) {
  std::vector<std::uint32_t> labels;
  std::size_t unconfident = 0;
  const auto probs = mixed_confidence_probs(50, labels, unconfident);
  const std::vector<double> grid{0.3};
  EXPECT_DOUBLE_EQ(
      cpl::tune_hyperparameter(grid, probs, labels, 0.1,
                               make_params(ScoreVariant::kSaps), 7),
      0.3);
}

TEST(Tune, DuplicateCandidatesTieBreakStably) {
  std::vector<std::uint32_t> labels;
  std::size_t unconfident = 0;
  const auto probs = mixed_confidence_probs(50, labels, unconfident);
  const std::vector<double> grid{0.25, 0.25};
  EXPECT_DOUBLE_EQ(
      cpl::tune_hyperparameter(grid, probs, labels, 0.1,
                               make_params(ScoreVariant::kSaps), 7),
      0.25);
}

TEST(Tune, PrefersTheSmallerAverageSize) {
  std::vector<std::uint32_t> labels;
  std::size_t unconfident = 0;
  const auto probs = mixed_confidence_probs(2000, labels, unconfident);
  const std::vector<double> grid{0.02, 10.0};
  EXPECT_DOUBLE_EQ(
      cpl::tune_hyperparameter(grid, probs, labels, 0.1,
                               make_params(ScoreVariant::kSaps), 3),
      0.02);
}

TEST(Tune, DeterministicForFixedSeed) {
  std::vector<std::uint32_t> labels;
  std::size_t unconfident = 0;
  const auto probs = mixed_confidence_probs(500, labels, unconfident);
  const auto grid = cpl::default_tuning_grid(ScoreVariant::kSaps);
  const double a = cpl::tune_hyperparameter(
      grid, probs, labels, 0.1, make_params(ScoreVariant::kSaps), 11);
  const double b = cpl::tune_hyperparameter(
      grid, probs, labels, 0.1, make_params(ScoreVariant::kSaps), 11);
  EXPECT_EQ(a, b);
}

TEST(Tune, RejectsBadArguments) {
  std::vector<std::uint32_t> labels;
  std::size_t unconfident = 0;
  const auto probs = mixed_confidence_probs(20, labels, unconfident);
  const ScoreParams saps = make_params(ScoreVariant::kSaps);
  EXPECT_THROW(cpl::tune_hyperparameter({}, probs, labels, 0.1, saps, 0),
               std::invalid_argument);
  const std::vector<double> bad_candidate{-0.5};
  EXPECT_THROW(
      cpl::tune_hyperparameter(bad_candidate, probs, labels, 0.1, saps, 0),
      std::invalid_argument);
  const std::vector<double> grid{0.1};
  EXPECT_THROW(cpl::tune_hyperparameter(grid, probs, labels, 0.1,
                                        make_params(ScoreVariant::kAps), 0),
               std::invalid_argument);
}

// --- calibrate / predict ----------------------------------------------------------

TEST(Calibrate, UntunedRunUsesTheFullDataset) {
  const cpl::LabeledDataset calibration = random_logit_dataset(500, 6, 21);
  PipelineConfig config;
  config.alpha = 0.1;
  config.params = make_params(ScoreVariant::kAps);
  config.seed = 21;
  const CalibrationRecord record = cpl::calibrate(calibration, config);
  EXPECT_FALSE(record.tuned_from.has_value());
  EXPECT_EQ(record.n_calibration, 500u);
  EXPECT_DOUBLE_EQ(record.temperature, 1.0);
  ASSERT_TRUE(record.n_classes.has_value());
  EXPECT_EQ(*record.n_classes, 6u);
}

TEST(Calibrate, TemperatureFittingAloneStillUsesEveryRow) {
  const cpl::LabeledDataset calibration = random_logit_dataset(500, 6, 22);
  PipelineConfig config;
  config.params = make_params(ScoreVariant::kAps);
  config.temperature_mode = TemperatureMode::kFit;
  config.seed = 5;
  const CalibrationRecord record = cpl::calibrate(calibration, config);
  EXPECT_FALSE(record.tuned_from.has_value());
  EXPECT_EQ(record.n_calibration, 500u);
  EXPECT_GT(record.temperature, 0.0);
}

TEST(Calibrate, TunedRunRecordsGridAndValidationSize) {
  const cpl::LabeledDataset calibration = random_logit_dataset(1000, 6, 23);
  PipelineConfig config;
  config.params = make_params(ScoreVariant::kSaps);
  const auto grid = cpl::default_tuning_grid(ScoreVariant::kSaps);
  config.grid = std::vector<double>(grid.begin(), grid.end());
  config.seed = 9;
  const CalibrationRecord record = cpl::calibrate(calibration, config);
  ASSERT_TRUE(record.tuned_from.has_value());
  EXPECT_EQ(record.tuned_from->grid, *config.grid);
  EXPECT_EQ(record.tuned_from->n_validation, 200u);  // round(0.2 * 1000)
  EXPECT_EQ(record.n_calibration, 800u);
  // The chosen value must come from the grid.
  EXPECT_NE(std::find(config.grid->begin(), config.grid->end(),
                      record.params.lambda),
            config.grid->end());
}

TEST(Calibrate, FixedTemperatureIsRecorded) {
  const cpl::LabeledDataset calibration = random_logit_dataset(300, 4, 24);
  PipelineConfig config;
  config.params = make_params(ScoreVariant::kCons);
  config.temperature_mode = TemperatureMode::kFixed;
  config.fixed_temperature = 2.5;
  const CalibrationRecord record = cpl::calibrate(calibration, config);
  EXPECT_DOUBLE_EQ(record.temperature, 2.5);
}

TEST(Calibrate, DeterministicRecordJson) {
  const cpl::LabeledDataset calibration = random_logit_dataset(400, 5, 25);
  PipelineConfig config;
  config.params = make_params(ScoreVariant::kRaps);
  const auto grid = cpl::default_tuning_grid(ScoreVariant::kRaps);
  config.grid = std::vector<double>(grid.begin(), grid.end());
  config.temperature_mode = TemperatureMode::kFit;
  config.seed = 31;
  const std::string a = cpl::calibrate(calibration, config).to_json_string();
  const std::string b = cpl::calibrate(calibration, config).to_json_string();
  EXPECT_EQ(a, b);
}

TEST(Predict, ClassCountMismatchIsRejected) {
  const cpl::LabeledDataset calibration = random_logit_dataset(200, 5, 26);
  PipelineConfig config;
  config.params = make_params(ScoreVariant::kAps);
  const CalibrationRecord record = cpl::calibrate(calibration, config);
  const cpl::LabeledDataset wrong_width = random_logit_dataset(50, 4, 27);
  EXPECT_THROW(cpl::predict_dataset(record, wrong_width.logits, 0),
               std::invalid_argument);
}

TEST(Predict, DetailedOutputsMatchSortedPredictions) {
  const cpl::LabeledDataset calibration = random_logit_dataset(400, 6, 28);
  const cpl::LabeledDataset test = random_logit_dataset(100, 6, 29);
  PipelineConfig config;
  config.params = make_params(ScoreVariant::kAps);
  config.seed = 12;
  const CalibrationRecord record = cpl::calibrate(calibration, config);
  const cpl::PredictionDetail detail =
      cpl::predict_dataset_detailed(record, test, 12);
  ASSERT_EQ(detail.sets.size(), 100u);
  ASSERT_EQ(detail.true_ranks.size(), 100u);
  ASSERT_EQ(detail.max_probs.size(), 100u);

  const auto probs = cpl::softmax(test.logits, record.temperature);
  const CounterRng test_rng(12, Stream::kTest);
  for (std::size_t i = 0; i < 20; ++i) {
    const SortedPrediction sp = cpl::sort_prediction(probs.row(i));
    EXPECT_EQ(detail.true_ranks[i], sp.rank_of(test.labels[i]));
    EXPECT_DOUBLE_EQ(detail.max_probs[i], sp.max_prob());
    // Rebuild the set from scratch with the row's published draw recipe.
    const PredictionSet reference =
        predict_set(sp, test_rng.unit(i), record.tau, record.params);
    EXPECT_EQ(detail.sets[i].members, reference.members);
  }

  // Same record and seed reproduce the same sets.
  const cpl::PredictionDetail again =
      cpl::predict_dataset_detailed(record, test, 12);
  for (std::size_t i = 0; i < detail.sets.size(); ++i) {
    ASSERT_EQ(detail.sets[i].members, again.sets[i].members);
  }
}

TEST(Predict, ScaleInvarianceOfRankOnlySets) {
  // Rank-only scores depend on the ordering alone, so any two temperatures
  // produce identical sets for the same seed.
  const cpl::LabeledDataset calibration = random_logit_dataset(500, 10, 30);
  const cpl::LabeledDataset test = random_logit_dataset(200, 10, 33);

  auto run_with_temperature = [&](double t) {
    PipelineConfig config;
    config.params = make_params(ScoreVariant::kCons);
    config.temperature_mode = TemperatureMode::kFixed;
    config.fixed_temperature = t;
    config.seed = 4;
    const CalibrationRecord record = cpl::calibrate(calibration, config);
    return cpl::predict_dataset(record, test.logits, 4);
  };
  const auto cold = run_with_temperature(0.5);
  const auto warm = run_with_temperature(2.0);
  ASSERT_EQ(cold.size(), warm.size());
  for (std::size_t i = 0; i < cold.size(); ++i) {
    ASSERT_EQ(cold[i].members, warm[i].members) << "example " << i;
  }
}

TEST(Predict, GammaInvarianceOfRankOnlySets) {
  const cpl::LabeledDataset calibration = random_logit_dataset(500, 10, 34);
  const cpl::LabeledDataset test = random_logit_dataset(200, 10, 35);

  auto run_with_gamma = [&](double gamma) {
    PipelineConfig config;
    config.params = make_params(ScoreVariant::kCons);
    config.params.gamma = gamma;
    config.seed = 8;
    const CalibrationRecord record = cpl::calibrate(calibration, config);
    return cpl::predict_dataset(record, test.logits, 8);
  };
  const auto unit = run_with_gamma(1.0);
  const auto scaled = run_with_gamma(7.3);
  ASSERT_EQ(unit.size(), scaled.size());
  for (std::size_t i = 0; i < unit.size(); ++i) {
    ASSERT_EQ(unit[i].members, scaled[i].members) << "example " << i;
  }
}

TEST(Threshold, DefaultIsInfinite) {
  EXPECT_TRUE(Threshold{}.infinite());
  EXPECT_FALSE(Threshold{1.0}.infinite());
}

}  // namespace
