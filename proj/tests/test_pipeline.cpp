#include <gtest/gtest.h>

#include "corereg/checkpoint.hpp"
#include "corereg/pipeline.hpp"

using namespace corereg;

namespace {

Sample sample(std::string id, double score, Vector feature, std::string cat = "c") {
  Sample s;
  s.id = std::move(id);
  s.category = std::move(cat);
  s.score = score;
  s.feature = std::move(feature);
  return s;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Dataset synth(std::size_t n, std::size_t dim, std::uint64_t seed = 7) {
  SynthConfig cfg;
  cfg.n_samples = n;
  cfg.feature_dim = dim;
  cfg.seed = seed;
  return synth_generate(cfg);
}

TrainConfig quick_config(std::size_t depth, std::size_t epochs) {
  TrainConfig cfg;
  cfg.tree.depth = depth;
  cfg.tree.node_feature_dim = 32;
  cfg.epochs = epochs;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST(PairFeaturize, ConcatenatesExemplarInputAndScore) {
  const Vector f = pair_featurize(vec({1, 2}), vec({3, 4}), 85, 100);
  ASSERT_EQ(f.size(), 5);
  EXPECT_EQ(f.head(4), vec({1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(f[4], 0.85);
}

TEST(PairFeaturize, ZeroScoreGivesZeroEntry) {
  EXPECT_EQ(pair_featurize(vec({1}), vec({2}), 0, 100)[2], 0.0);
}

TEST(PairFeaturize, ScoreAboveNormalizerRejected) {
  EXPECT_THROW(pair_featurize(vec({1}), vec({2}), 120, 100), NumericError);
  EXPECT_THROW(pair_featurize(vec({1}), vec({2, 3}), 50, 100), DimensionError);
}

TEST(ChooseEpsilon, TenPercentHeadroom) {
  const Dataset ds({sample("a", 95, vec({0})), sample("b", 40, vec({0}))}, 1);
  EXPECT_DOUBLE_EQ(choose_epsilon(ds, "c"), 104.5);
}

TEST(ChooseEpsilon, AllZeroScoresRejected) {
  const Dataset ds({sample("a", 0, vec({0})), sample("b", 0, vec({0}))}, 1);
  EXPECT_THROW(choose_epsilon(ds, "c"), NumericError);
}

TEST(ChooseEpsilon, TrainingMaxNormalizesBelowOne) {
  const Dataset ds = synth(50, 2);
  const double eps = choose_epsilon(ds, "action0");
  for (const Sample& s : ds.samples()) EXPECT_LE(s.score / eps, 1.0 / 1.1 + 1e-15);
}

TEST(Vote, AveragesExemplarVotes) {
  const std::vector<Sample> ex{sample("e1", 50, vec({0})), sample("e2", 60, vec({0}))};
  const std::vector<double> deltas{5, -5};
  const Prediction p = combine_votes(sample("x", 0, vec({0})), ex, deltas);
  EXPECT_DOUBLE_EQ(p.score, 55.0);
  EXPECT_EQ(p.per_exemplar, (std::vector<double>{55, 55}));
}

TEST(Vote, SingleExemplarIsItsOwnVote) {
  const std::vector<Sample> ex{sample("e1", 42, vec({0}))};
  const Prediction p = vote(sample("x", 0, vec({0})), ex, [](const Sample&, const Sample&) { return 7.5; });
  EXPECT_DOUBLE_EQ(p.score, 49.5);
  EXPECT_DOUBLE_EQ(p.score, p.per_exemplar[0]);
}

TEST(Vote, ShiftingEveryDeltaShiftsTheScore) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(12);
    std::vector<Sample> ex;
    std::vector<double> deltas, shifted;
    const double c = rng.uniform(-10, 10);
    for (std::size_t k = 0; k < m; ++k) {
      ex.push_back(sample("e" + std::to_string(k), rng.uniform(0, 100), vec({0})));
      deltas.push_back(rng.uniform(-20, 20));
      shifted.push_back(deltas.back() + c);
    }
    const Sample x = sample("x", 0, vec({0}));
    EXPECT_NEAR(combine_votes(x, ex, shifted).score, combine_votes(x, ex, deltas).score + c, 1e-9);
  }
}

TEST(Vote, EmptyExemplarsRejected) {
  EXPECT_THROW(combine_votes(sample("x", 0, vec({0})), std::vector<Sample>{}, std::vector<double>{}),
               ConfigError);
}

TEST(Train, LossDecreasesOnSyntheticTask) {
  SynthConfig sc;
  sc.n_samples = 300;
  sc.feature_dim = 16;
  sc.noise_std = 0.05;
  sc.seed = 7;
  const Dataset ds = synth_generate(sc);
  const TrainResult r = train(ds, quick_config(3, 50));
  ASSERT_EQ(r.log.size(), 50u);
  EXPECT_LT(r.log.back().total, r.log.front().total);
  for (const EpochLog& e : r.log) EXPECT_NEAR(e.total, e.cls + e.reg, 1e-9);
}

TEST(Train, SameSeedGivesIdenticalCheckpoint) {
  const Dataset ds = synth(60, 6);
  const TrainConfig cfg = quick_config(2, 3);
  const std::string a = serialize_checkpoint({train(ds, cfg).model, {cfg.seed, "x"}});
  const std::string b = serialize_checkpoint({train(ds, cfg).model, {cfg.seed, "x"}});
  EXPECT_EQ(a, b);
  TrainConfig other = cfg;
  other.seed = 8;
  EXPECT_NE(a, serialize_checkpoint({train(ds, other).model, {cfg.seed, "x"}}));
}

TEST(Train, PartitionCoversTrainingDeltas) {
  const Dataset ds = synth(40, 4);
  const TrainResult r = train(ds, quick_config(2, 1));
  const auto deltas = collect_deltas(ds, ExemplarPolicy{});
  EXPECT_EQ(r.model.partition.lower(), deltas.front());
  EXPECT_EQ(r.model.partition.upper(), deltas.back());
  EXPECT_EQ(r.model.partition.size(), 4u);
  EXPECT_EQ(r.model.tree.config.input_dim, 9u);
}

TEST(Train, AdapterAndAbsoluteModesRun) {
  const Dataset ds = synth(40, 4);
  TrainConfig cfg = quick_config(2, 2);
  cfg.use_adapter = true;
  const TrainResult a = train(ds, cfg);
  ASSERT_TRUE(a.model.adapter.has_value());
  EXPECT_EQ(predict_all(a.model, ds, ds, cfg.policy, 3, 1).size(), ds.size());

  cfg.use_adapter = false;
  cfg.mode = RegressionMode::absolute;
  const TrainResult b = train(ds, cfg);
  EXPECT_EQ(b.model.tree.config.input_dim, 4u);
  const Prediction p = predict(b.model, ds[0], {});
  EXPECT_GE(p.score, b.model.partition.lower());
  EXPECT_LE(p.score, b.model.partition.upper());
}

TEST(Predict, EveryVoteLiesInsideItsGroup) {
  const Dataset ds = synth(80, 5);
  const TrainResult r = train(ds, quick_config(3, 2));
  for (const Prediction& p : predict_all(r.model, ds, ds, ExemplarPolicy{}, 5, 3)) {
    ASSERT_EQ(p.per_exemplar.size(), 5u);
    double sum = 0.0;
    for (std::size_t m = 0; m < 5; ++m) {
      const Interval& g = r.model.partition[p.groups[m]];
      const double delta = p.per_exemplar[m] - p.exemplar_scores[m];
      EXPECT_GE(delta, g.left - 1e-9);
      EXPECT_LE(delta, g.right + 1e-9);
      sum += p.per_exemplar[m];
    }
    EXPECT_NEAR(p.score, sum / 5.0, 1e-9);
    EXPECT_TRUE(p.truth.has_value());
  }
}

TEST(Predict, OrderIndependentExemplarDraws) {
  const Dataset ds = synth(30, 3);
  const TrainResult r = train(ds, quick_config(1, 1));
  const auto all = predict_all(r.model, ds, ds, ExemplarPolicy{}, 4, 9);
  const std::vector<std::size_t> pick{5};
  const Dataset one = ds.subset(pick);
  const auto single = predict_all(r.model, one, ds, ExemplarPolicy{}, 4, 9);
  EXPECT_EQ(single[0].exemplar_ids, all[5].exemplar_ids);
  EXPECT_EQ(single[0].score, all[5].score);
}

TEST(Predict, WrongFeatureWidthRejected) {
  const Dataset ds = synth(20, 3);
  const TrainResult r = train(ds, quick_config(1, 1));
  const std::vector<Sample> ex{ds[1]};
  EXPECT_THROW(predict(r.model, sample("x", 50, vec({1, 2}), "action0"), ex), DimensionError);
}

TEST(Baseline, MemorizesTinySet) {
  std::vector<Sample> s;
  for (int i = 0; i < 4; ++i) {
    Vector f = Vector::Zero(4);
    f[i] = 1.0;
    s.push_back(sample("t" + std::to_string(i), 20.0 + 20.0 * i, f));
  }
  const Dataset ds(std::move(s), 4);
  TrainConfig cfg = quick_config(1, 400);
  cfg.tree.node_feature_dim = 64;
  cfg.batch_size = 4;
  cfg.lr_tree = 1e-2;
  const BaselineResult r = baseline_train(ds, cfg);
  EXPECT_LT(r.epoch_mse.back(), 1e-6);
  for (const Sample& x : ds.samples()) EXPECT_NEAR(baseline_predict(r.model, x), x.score, 0.5);
}

TEST(Baseline, SameSeedGivesIdenticalPredictions) {
  const Dataset ds = synth(40, 4);
  const TrainConfig cfg = quick_config(1, 3);
  const BaselineResult a = baseline_train(ds, cfg);
  const BaselineResult b = baseline_train(ds, cfg);
  for (const Sample& x : ds.samples())
    EXPECT_EQ(baseline_predict(a.model, x), baseline_predict(b.model, x));
}
