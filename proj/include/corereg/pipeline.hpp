#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corereg/dataset.hpp"
#include "corereg/error.hpp"
#include "corereg/neural.hpp"
#include "corereg/partition.hpp"
#include "corereg/random.hpp"
#include "corereg/tree.hpp"

namespace corereg {

/// contrastive: the tree regresses input-minus-exemplar score differences.
/// absolute: the tree sees one feature and regresses the score itself
/// (groups built over absolute training scores); used for ablations.
enum class RegressionMode { contrastive, absolute };

inline std::string to_string(RegressionMode m) {
  return m == RegressionMode::contrastive ? "contrastive" : "absolute";
}

inline RegressionMode regression_mode_from_string(const std::string& s) {
  if (s == "contrastive") return RegressionMode::contrastive;
  if (s == "absolute") return RegressionMode::absolute;
  throw ConfigError("unknown regression mode '" + s + "'");
}

inline constexpr double kEpsilonHeadroom = 1.1;

/// Normalizing constant for exemplar scores: the category's largest training
/// score times the headroom factor.
inline double choose_epsilon(const Dataset& train, const std::string& category,
                             double headroom = kEpsilonHeadroom) {
  std::optional<double> best;
  for (const Sample& s : train.samples())
    if (s.category == category) best = best ? std::max(*best, s.score) : s.score;
  if (!best) throw DataError("no training samples in category '" + category + "'");
  const double eps = *best * headroom;
  if (!(eps > 0.0))
    throw NumericError("normalizer for category '" + category + "' must be positive");
  return eps;
}

inline std::map<std::string, double> choose_epsilons(const Dataset& train,
                                                     double headroom = kEpsilonHeadroom) {
  std::map<std::string, double> out;
  for (const std::string& c : train.categories()) out[c] = choose_epsilon(train, c, headroom);
  return out;
}

/// concat(exemplar feature, input feature, exemplar score / eps).
inline Vector pair_featurize(const Vector& exemplar, const Vector& input,
                             double exemplar_score, double eps) {
  if (!(eps > 0.0)) throw ConfigError("normalizer must be positive");
  if (exemplar.size() != input.size())
    throw DimensionError(exemplar.size(), input.size(), "pair features");
  const double scaled = exemplar_score / eps;
  if (!(scaled >= 0.0 && scaled <= 1.0))
    throw NumericError("exemplar score " + std::to_string(exemplar_score) +
                       " does not normalize into [0, 1] with eps " + std::to_string(eps));
  Vector out(2 * exemplar.size() + 1);
  out << exemplar, input, scaled;
  return out;
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t pairs_per_input = 1;
  double lr_tree = 1e-3;
  double lr_adapter = 1e-4;
  /// Trainable linear map over features, initialized to the identity.
  bool use_adapter = false;
  ExemplarPolicy policy;
  std::uint64_t seed = 0;
  TreeConfig tree;  // input_dim is derived from the data
  double epsilon_headroom = kEpsilonHeadroom;
  RegressionMode mode = RegressionMode::contrastive;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (pairs_per_input == 0) throw ConfigError("pairs_per_input must be positive");
    if (!(lr_tree > 0.0) || !(lr_adapter > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(epsilon_headroom >= 1.0)) throw ConfigError("epsilon headroom must be >= 1");
    policy.validate();
    if (tree.depth == 0 || tree.depth > 20) throw ConfigError("tree depth must lie in [1, 20]");
    if (tree.node_feature_dim == 0) throw ConfigError("node_feature_dim must be positive");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
};

/// Everything needed to score new samples.
struct Regressor {
  RegressionMode mode = RegressionMode::contrastive;
  std::size_t feature_dim = 0;
  TreeModel tree;
  std::optional<MLPBlock> adapter;
  GroupPartition partition;
  std::map<std::string, double> epsilon;
  ExemplarPolicy policy;
};

struct TrainResult {
  Regressor model;
  std::vector<EpochLog> log;
};

namespace detail {

inline Matrix gather_features(const Dataset& ds, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(ds.feature_dim()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t b = 0; b < idx.size(); ++b) out.col(static_cast<Eigen::Index>(b)) = ds[idx[b]].feature;
  return out;
}

inline MLPBlock identity_adapter(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  MLPBlock b;
  b.layers.push_back({Matrix::Identity(d, d), Vector::Zero(d)});
  b.activations.push_back(Activation::identity);
  return b;
}

inline double epsilon_for(const Regressor& model, const std::string& category) {
  auto it = model.epsilon.find(category);
  if (it == model.epsilon.end())
    throw DataError("model has no normalizer for category '" + category + "'");
  return it->second;
}

/// Stacks tree inputs for a batch. Contrastive rows: exemplar feature, input
/// feature, normalized exemplar score. Absolute rows: input feature.
inline Matrix assemble_inputs(RegressionMode mode, const Matrix& exemplars, const Matrix& inputs,
                              const std::vector<double>& scaled_scores) {
  if (mode == RegressionMode::absolute) return inputs;
  const Eigen::Index d = inputs.rows();
  Matrix x(2 * d + 1, inputs.cols());
  x.topRows(d) = exemplars;
  x.middleRows(d, d) = inputs;
  for (Eigen::Index b = 0; b < inputs.cols(); ++b) {
    const double s = scaled_scores[static_cast<std::size_t>(b)];
    if (!(s >= 0.0 && s <= 1.0))
      throw NumericError("exemplar score does not normalize into [0, 1]");
    x(2 * d, b) = s;
  }
  return x;
}

}  // namespace detail

/// Fits the tree on policy-matched pairs. The quantile partition is built
/// once from the training deltas; each epoch redraws `pairs_per_input`
/// exemplars per input and minimizes J with Adam.
inline TrainResult train(const Dataset& train_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() < 2) throw DataError("training needs at least 2 samples");
  const std::size_t dim = train_set.feature_dim();
  Rng rng(cfg.seed);

  TrainResult result;
  Regressor& model = result.model;
  model.mode = cfg.mode;
  model.feature_dim = dim;
  model.policy = cfg.policy;
  model.epsilon = choose_epsilons(train_set, cfg.epsilon_headroom);

  if (cfg.mode == RegressionMode::contrastive) {
    const auto deltas = collect_deltas(train_set, cfg.policy);
    model.partition = build_quantile(deltas, cfg.tree.leaves());
  } else {
    std::vector<double> scores;
    for (const Sample& s : train_set.samples()) scores.push_back(s.score);
    std::sort(scores.begin(), scores.end());
    model.partition = build_quantile(scores, cfg.tree.leaves());
  }

  TreeConfig tc = cfg.tree;
  tc.input_dim = cfg.mode == RegressionMode::contrastive ? 2 * dim + 1 : dim;
  model.tree = TreeModel::create(tc, rng);
  if (cfg.use_adapter) model.adapter = detail::identity_adapter(dim);

  AdamState tree_opt;
  tree_opt.lr = cfg.lr_tree;
  AdamState adapter_opt;
  adapter_opt.lr = cfg.lr_adapter;
  const auto tree_params = model.tree.parameters();
  std::vector<std::span<double>> adapter_params;
  if (model.adapter) adapter_params = model.adapter->parameters();

  // Pairs are (input index, exemplar index); exemplar is unused in absolute mode.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    pairs.clear();
    for (std::size_t i : order) {
      if (cfg.mode == RegressionMode::absolute) {
        pairs.emplace_back(i, i);
        continue;
      }
      for (std::size_t e : select_exemplar_indices(train_set[i], train_set, cfg.policy,
                                                   cfg.pairs_per_input, rng))
        pairs.emplace_back(i, e);
    }

    EpochLog entry{epoch, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      std::vector<std::size_t> in_idx, ex_idx;
      std::vector<double> scaled;
      std::vector<PairLabel> labels;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& input = train_set[pairs[k].first];
        const Sample& exemplar = train_set[pairs[k].second];
        in_idx.push_back(pairs[k].first);
        ex_idx.push_back(pairs[k].second);
        if (cfg.mode == RegressionMode::contrastive) {
          scaled.push_back(exemplar.score / detail::epsilon_for(model, exemplar.category));
          labels.push_back(make_label(model.partition, input.score - exemplar.score));
        } else {
          labels.push_back(make_label(model.partition, input.score));
        }
      }

      Matrix f_in = detail::gather_features(train_set, in_idx);
      Matrix f_ex = detail::gather_features(train_set, ex_idx);
      Tape in_tape, ex_tape;
      if (model.adapter) {
        in_tape = forward(*model.adapter, f_in);
        f_in = in_tape.output();
        if (cfg.mode == RegressionMode::contrastive) {
          ex_tape = forward(*model.adapter, f_ex);
          f_ex = ex_tape.output();
        }
      }
      const Matrix x = detail::assemble_inputs(cfg.mode, f_ex, f_in, scaled);
      const TreeForward fw = tree_forward(model.tree, x);
      const TreeLoss loss = tree_loss(fw.output, labels);
      TreeGradient grad = tree_backward(model.tree, fw, loss);

      const double weight = static_cast<double>(end - start) / static_cast<double>(pairs.size());
      entry.total += loss.total * weight;
      entry.cls += loss.cls * weight;
      entry.reg += loss.reg * weight;

      if (model.adapter) {
        MLPBlock adapter_grad = model.adapter->zeros_like();
        const auto d = static_cast<Eigen::Index>(dim);
        if (cfg.mode == RegressionMode::contrastive) {
          backward(*model.adapter, ex_tape, grad.input.topRows(d), adapter_grad);
          backward(*model.adapter, in_tape, grad.input.middleRows(d, d), adapter_grad);
        } else {
          backward(*model.adapter, in_tape, grad.input, adapter_grad);
        }
        const auto g = adapter_grad.parameters();
        adam_step(adapter_opt, adapter_params, g);
      }
      const auto g = grad.params.parameters();
      adam_step(tree_opt, tree_params, g);
    }
    result.log.push_back(entry);
  }
  return result;
}

struct Prediction {
  std::string id;
  double score = 0.0;
  std::optional<double> truth;
  std::vector<double> per_exemplar;
  std::vector<std::size_t> groups;  // chosen leaf per exemplar, zero-based
  std::vector<std::string> exemplar_ids;
  std::vector<double> exemplar_scores;
};

/// Mean of per-exemplar votes delta_m + s_m.
inline Prediction combine_votes(const Sample& input, std::span<const Sample> exemplars,
                                std::span<const double> deltas) {
  if (exemplars.empty()) throw ConfigError("prediction needs at least one exemplar");
  if (deltas.size() != exemplars.size())
    throw DimensionError(exemplars.size(), deltas.size(), "exemplar votes");
  Prediction p;
  p.id = input.id;
  double sum = 0.0;
  for (std::size_t m = 0; m < exemplars.size(); ++m) {
    const double vote = deltas[m] + exemplars[m].score;
    p.per_exemplar.push_back(vote);
    p.exemplar_ids.push_back(exemplars[m].id);
    p.exemplar_scores.push_back(exemplars[m].score);
    sum += vote;
  }
  p.score = sum / static_cast<double>(exemplars.size());
  return p;
}

/// Multi-exemplar voting with an arbitrary relative-score predictor
/// `delta(input, exemplar)`.
inline Prediction vote(const Sample& input, std::span<const Sample> exemplars,
                       const std::function<double(const Sample&, const Sample&)>& delta) {
  std::vector<double> deltas;
  deltas.reserve(exemplars.size());
  for (const Sample& e : exemplars) deltas.push_back(delta(input, e));
  return combine_votes(input, exemplars, deltas);
}

namespace detail {

inline Matrix adapt(const Regressor& model, Matrix f) {
  if (model.adapter) return forward(*model.adapter, f).output();
  return f;
}

}  // namespace detail

/// Scores one input against M exemplars. In absolute mode the exemplars are
/// ignored and the tree decodes the score directly.
inline Prediction predict(const Regressor& model, const Sample& input,
                          std::span<const Sample> exemplars) {
  if (static_cast<std::size_t>(input.feature.size()) != model.feature_dim)
    throw DimensionError(model.feature_dim, input.feature.size(), "input '" + input.id + "'");
  if (model.mode == RegressionMode::absolute) {
    const Matrix f = detail::adapt(model, Matrix(input.feature));
    const TreeForward fw = tree_forward(model.tree, f);
    Prediction p;
    p.id = input.id;
    p.score = decode_delta(fw.output, model.partition);
    p.groups.push_back(best_leaf(fw.output));
    return p;
  }
  if (exemplars.empty()) throw ConfigError("prediction needs at least one exemplar");
  const auto m = static_cast<Eigen::Index>(exemplars.size());
  const auto d = static_cast<Eigen::Index>(model.feature_dim);
  Matrix f_ex(d, m), f_in(d, m);
  std::vector<double> scaled;
  for (Eigen::Index k = 0; k < m; ++k) {
    const Sample& e = exemplars[static_cast<std::size_t>(k)];
    if (e.feature.size() != d) throw DimensionError(model.feature_dim, e.feature.size(), "exemplar '" + e.id + "'");
    f_ex.col(k) = e.feature;
    f_in.col(k) = input.feature;
    scaled.push_back(e.score / detail::epsilon_for(model, e.category));
  }
  const Matrix x = detail::assemble_inputs(model.mode, detail::adapt(model, f_ex),
                                           detail::adapt(model, f_in), scaled);
  const TreeForward fw = tree_forward(model.tree, x);
  std::vector<double> deltas;
  std::vector<std::size_t> groups;
  for (Eigen::Index k = 0; k < m; ++k) {
    deltas.push_back(decode_delta(fw.output, model.partition, static_cast<std::size_t>(k)));
    groups.push_back(best_leaf(fw.output, static_cast<std::size_t>(k)));
  }
  Prediction p = combine_votes(input, exemplars, deltas);
  p.groups = std::move(groups);
  return p;
}

inline constexpr std::size_t kDefaultExemplars = 10;

/// Predicts every sample of `test`, drawing M exemplars from `pool` with a
/// stream derived from `seed` and the sample id (order independent).
inline std::vector<Prediction> predict_all(const Regressor& model, const Dataset& test,
                                           const Dataset& pool, const ExemplarPolicy& policy,
                                           std::size_t m, std::uint64_t seed) {
  std::vector<Prediction> out;
  out.reserve(test.size());
  for (const Sample& s : test.samples()) {
    std::vector<Sample> exemplars;
    if (model.mode == RegressionMode::contrastive) {
      Rng rng(derive_seed(seed, s.id));
      exemplars = select_exemplars(s, pool, policy, m, rng);
    }
    Prediction p = predict(model, s, exemplars);
    p.truth = s.score;
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct-regression baseline

/// Three-layer MLP on a single feature regressing score / eps with MSE.
struct BaselineModel {
  MLPBlock mlp;
  std::map<std::string, double> epsilon;
};

struct BaselineResult {
  BaselineModel model;
  std::vector<double> epoch_mse;
};

/// Uses epochs, batch_size, lr_tree, seed and tree.node_feature_dim (hidden
/// width) from `cfg`.
inline BaselineResult baseline_train(const Dataset& train_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw EmptyDatasetError("baseline training set");
  Rng rng(cfg.seed);
  BaselineResult result;
  BaselineModel& model = result.model;
  model.epsilon = choose_epsilons(train_set, cfg.epsilon_headroom);
  const auto d = static_cast<Eigen::Index>(train_set.feature_dim());
  const auto h = static_cast<Eigen::Index>(cfg.tree.node_feature_dim);
  model.mlp = make_block({d, h, h, 1}, {Activation::relu, Activation::relu, Activation::identity}, rng);

  AdamState opt;
  opt.lr = cfg.lr_tree;
  const auto params = model.mlp.parameters();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double mse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix x = detail::gather_features(train_set, idx);
      Matrix target(1, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const Sample& s = train_set[idx[b]];
        target(0, static_cast<Eigen::Index>(b)) = s.score / model.epsilon.at(s.category);
      }
      const Tape tape = forward(model.mlp, x);
      const Matrix diff = tape.output() - target;
      const double n = static_cast<double>(idx.size());
      mse += diff.squaredNorm() / static_cast<double>(order.size());
      MLPBlock grad = model.mlp.zeros_like();
      backward(model.mlp, tape, (2.0 / n) * diff, grad);
      const auto g = grad.parameters();
      adam_step(opt, params, g);
    }
    result.epoch_mse.push_back(mse);
  }
  return result;
}

inline double baseline_predict(const BaselineModel& model, const Sample& s) {
  auto it = model.epsilon.find(s.category);
  if (it == model.epsilon.end())
    throw DataError("baseline has no normalizer for category '" + s.category + "'");
  const Tape tape = forward(model.mlp, Matrix(s.feature));
  return tape.output()(0, 0) * it->second;
}

}  // namespace corereg
