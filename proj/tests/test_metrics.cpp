#include <algorithm>
#include <limits>

#include <gtest/gtest.h>

#include "corereg/metrics.hpp"
#include "corereg/random.hpp"
#include "oracles.hpp"

using namespace corereg;

namespace {

std::vector<double> random_list(Rng& rng, std::size_t n, bool with_ties) {
  std::vector<double> v(n);
  for (double& x : v) x = with_ties ? static_cast<double>(rng.below(6)) : rng.uniform(-50, 50);
  return v;
}

}  // namespace

TEST(Spearman, IdenticalListsGiveOne) {
  const std::vector<double> v{3, 1, 4, 1.5, 9, 2.6};
  EXPECT_DOUBLE_EQ(spearman(v, v), 1.0);
}

TEST(Spearman, ReversedGivesMinusOne) {
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  const std::vector<double> p{6, 5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(p, t), -1.0);
}

TEST(Spearman, OneAdjacentSwapGivesPointNine) {
  const std::vector<double> t{1, 2, 3, 4, 5};
  const std::vector<double> p{1, 2, 3, 5, 4};
  EXPECT_NEAR(spearman(p, t), 0.9, 1e-15);
}

TEST(Spearman, ConstantInputIsUndefined) {
  const std::vector<double> c{2, 2, 2};
  const std::vector<double> t{1, 2, 3};
  EXPECT_THROW(spearman(c, t), NumericError);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), ConfigError);
}

TEST(Spearman, TiesGetAverageRanks) {
  const std::vector<double> v{10, 20, 20, 30};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1, 2.5, 2.5, 4}));
}

TEST(Spearman, MatchesBruteForceOnRandomLists) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    const bool ties = trial % 2 == 0;
    const auto p = random_list(rng, n, ties);
    const auto t = random_list(rng, n, ties);
    const auto rp = oracle::brute_ranks(p), rt = oracle::brute_ranks(t);
    if (std::all_of(rp.begin(), rp.end(), [&](double r) { return r == rp[0]; }) ||
        std::all_of(rt.begin(), rt.end(), [&](double r) { return r == rt[0]; }))
      continue;
    EXPECT_NEAR(spearman(p, t), oracle::brute_spearman(p, t), 1e-12);
    if (!ties) {
      EXPECT_NEAR(spearman(p, t), oracle::spearman_no_ties(p, t), 1e-12);
    }
  }
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_list(rng, 30, false);
    const auto t = random_list(rng, 30, false);
    std::vector<double> q(p.size());
    std::transform(p.begin(), p.end(), q.begin(), [](double x) { return std::exp(x / 10.0) * 3 + 1; });
    EXPECT_NEAR(spearman(q, t), spearman(p, t), 1e-12);
    EXPECT_NEAR(spearman(t, p), spearman(p, t), 1e-12);
  }
}

TEST(FisherAvg, EqualValuesAreAFixedPoint) {
  EXPECT_NEAR(fisher_avg(std::vector<double>{0.5, 0.5}), 0.5, 1e-15);
}

TEST(FisherAvg, ZeroAndPointEight) {
  const double v = fisher_avg(std::vector<double>{0.0, 0.8});
  EXPECT_NEAR(v, std::tanh(std::atanh(0.8) / 2.0), 1e-15);
  EXPECT_NEAR(v, 0.5, 1e-3);
}

TEST(FisherAvg, PerfectCorrelationIsClamped) {
  const double v = fisher_avg(std::vector<double>{1.0});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 1.0, 1e-6);
  EXPECT_THROW(fisher_avg(std::vector<double>{}), ConfigError);
}

TEST(FisherAvg, MatchesLogFormOracle) {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(1 + rng.below(8));
    for (double& x : r) x = rng.uniform(-0.999, 0.999);
    EXPECT_NEAR(fisher_avg(r), oracle::brute_fisher(r), 1e-12);
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    EXPECT_GE(fisher_avg(r), *lo - 1e-12);
    EXPECT_LE(fisher_avg(r), *hi + 1e-12);
  }
}

TEST(RL2, PerfectPredictionsGiveZero) {
  const std::vector<double> v{40, 50, 60};
  EXPECT_EQ(r_l2(v, v, 100, 0), 0.0);
}

TEST(RL2, SingleErrorOfTenOnRangeHundred) {
  const std::vector<double> p{60}, t{50};
  EXPECT_NEAR(r_l2(p, t, 100, 0), 0.01, 1e-15);
}

TEST(RL2, ToleranceAbsorbsSmallErrors) {
  const std::vector<double> p{60}, t{50};
  EXPECT_EQ(r_l2(p, t, 100, 0, 10), 0.0);
  EXPECT_NEAR(r_l2(p, t, 100, 0, 5), 0.0025, 1e-15);
}

TEST(RL2, DegenerateRangeRejected) {
  const std::vector<double> v{1};
  EXPECT_THROW(r_l2(v, v, 5, 5), NumericError);
  EXPECT_THROW(r_l2(v, v, 10, 0, -1), ConfigError);
}

TEST(RL2, MatchesDirectSummation) {
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const auto p = random_list(rng, n, false);
    const auto t = random_list(rng, n, false);
    const double theta = trial % 3 == 0 ? 0.0 : rng.uniform(0, 20);
    EXPECT_NEAR(r_l2(p, t, 70, -30, theta), oracle::brute_r_l2(p, t, 70, -30, theta), 1e-12);
  }
}

TEST(RL2, NonincreasingInTolerance) {
  Rng rng(35);
  const auto p = random_list(rng, 25, false);
  const auto t = random_list(rng, 25, false);
  double prev = r_l2(p, t, 100, 0, 0);
  for (double theta = 0.5; theta < 60; theta += 0.5) {
    const double v = r_l2(p, t, 100, 0, theta);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Curve, ZeroThresholdCountsNothing) {
  const std::vector<double> v{1, 2, 3};
  const std::vector<double> th{0.0};
  EXPECT_EQ(cumulative_curve(v, v, th)[0].fraction, 0.0);
}

TEST(Curve, HugeThresholdCountsEverything) {
  const std::vector<double> p{1, 20, 300}, t{0, 0, 0};
  const std::vector<double> th{std::numeric_limits<double>::max()};
  EXPECT_EQ(cumulative_curve(p, t, th)[0].fraction, 1.0);
}

TEST(Curve, TwoOfThreeBelowFour) {
  const std::vector<double> p{1, 3, 5}, t{0, 0, 0};
  const std::vector<double> th{4.0, 5.0, 5.5};
  const auto c = cumulative_curve(p, t, th);
  EXPECT_DOUBLE_EQ(c[0].fraction, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[1].fraction, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[2].fraction, 1.0);
}

TEST(Curve, MatchesCountingOracleAndIsMonotone) {
  Rng rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    const auto p = random_list(rng, n, trial % 2 == 0);
    const auto t = random_list(rng, n, trial % 2 == 0);
    std::vector<double> th(10);
    for (double& x : th) x = std::floor(rng.uniform(0, 40));
    std::sort(th.begin(), th.end());
    const auto c = cumulative_curve(p, t, th);
    for (std::size_t k = 0; k < th.size(); ++k) {
      EXPECT_NEAR(c[k].fraction, oracle::brute_fraction_below(p, t, th[k]), 1e-12);
      if (k > 0) {
        EXPECT_GE(c[k].fraction, c[k - 1].fraction);
      }
    }
  }
}

TEST(Curve, UnsortedThresholdsRejected) {
  const std::vector<double> v{1}, th{2, 1};
  EXPECT_THROW(cumulative_curve(v, v, th), ConfigError);
}

TEST(LayerAccuracy, PerfectPredictionsEverywhere) {
  const std::vector<std::size_t> leaves{0, 3, 5, 7, 2};
  for (std::size_t k : {0u, 1u, 3u})
    for (const LayerAccuracy& a : layer_accuracy(leaves, leaves, 3, k)) EXPECT_EQ(a.accuracy, 1.0);
}

TEST(LayerAccuracy, SaturatedToleranceIsTriviallyOne) {
  const std::vector<std::size_t> pred{0, 7, 3}, truth{7, 0, 4};
  const auto acc = layer_accuracy(pred, truth, 3, 2);
  EXPECT_EQ(acc[0].accuracy, 1.0);
  EXPECT_TRUE(acc[0].saturated);
  EXPECT_FALSE(acc[1].saturated);
}

TEST(LayerAccuracy, NeighbouringLeavesInDifferentHalves) {
  // Zero-based leaves 2 and 1 of a depth-2 tree: right and left halves.
  const std::vector<std::size_t> pred{2}, truth{1};
  const auto strict = layer_accuracy(pred, truth, 2, 0);
  EXPECT_EQ(strict[0].accuracy, 0.0);
  EXPECT_EQ(strict[1].accuracy, 0.0);
  const auto loose = layer_accuracy(pred, truth, 2, 1);
  EXPECT_EQ(loose[0].layer, 1u);
  EXPECT_EQ(loose[0].accuracy, 1.0);
  EXPECT_EQ(loose[1].accuracy, 1.0);
}

TEST(LayerAccuracy, ShallowLayersNeverWorseThanDeep) {
  Rng rng(37);
  std::vector<std::size_t> pred(200), truth(200);
  for (std::size_t i = 0; i < 200; ++i) {
    pred[i] = rng.below(32);
    truth[i] = rng.below(32);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const auto acc = layer_accuracy(pred, truth, 5, k);
    for (std::size_t l = 1; l < acc.size(); ++l) EXPECT_GE(acc[l - 1].accuracy, acc[l].accuracy);
  }
}
