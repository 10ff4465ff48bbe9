#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "corereg/checkpoint.hpp"
#include "corereg/dataset.hpp"
#include "corereg/error.hpp"
#include "corereg/metrics.hpp"
#include "corereg/partition.hpp"
#include "corereg/pipeline.hpp"

namespace corereg {

/// Parameters shared by every subcommand. Loaded from a JSON file, then
/// overridden by command-line flags.
struct RunConfig {
  std::uint64_t seed = 7;
  SynthConfig synth;
  TrainConfig train;
  std::size_t exemplars = kDefaultExemplars;
  double theta = 0.0;
  std::vector<std::size_t> tolerances{0, 1, 2};
  std::vector<double> thresholds;  // empty: 0, 0.5, ..., 10 score units
  SplitMode split = Holdout{0.25};
  std::size_t groups = 0;          // partition command; 0 means 2^depth

  std::size_t group_count() const { return groups ? groups : train.tree.leaves(); }

  std::vector<double> curve_thresholds() const {
    if (!thresholds.empty()) return thresholds;
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i) t.push_back(0.5 * i);
    return t;
  }

  /// Pushes the top-level seed into every component that draws randomness.
  void apply_seed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    train.seed = s;
    train.policy.random_seed = s;
  }

  void set_policy(const std::string& name) {
    if (name == "category") {
      train.policy.match_category = true;
      train.policy.match_difficulty = false;
    } else if (name == "category+dd") {
      train.policy.match_category = true;
      train.policy.match_difficulty = true;
    } else {
      throw ConfigError("unknown policy '" + name + "' (expected category or category+dd)");
    }
  }

  std::string policy_name() const {
    return train.policy.match_difficulty ? "category+dd" : "category";
  }

  void validate() const {
    train.validate();
    if (exemplars == 0) throw ConfigError("exemplars must be positive");
    if (!(theta >= 0.0)) throw ConfigError("theta must be nonnegative");
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
      throw ConfigError("thresholds must be ascending");
    if (groups) check_group_count(groups);
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

inline std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

inline nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["policy"] = c.policy_name();
  j["exemplars"] = c.exemplars;
  j["theta"] = c.theta;
  j["tolerances"] = c.tolerances;
  j["thresholds"] = c.thresholds;
  j["groups"] = c.groups;
  if (const auto* h = std::get_if<Holdout>(&c.split)) {
    j["split"] = {{"holdout", h->test_fraction}};
  } else {
    j["split"] = {{"k_folds", std::get<KFold>(c.split).k}};
  }
  j["tree"] = {{"depth", c.train.tree.depth}, {"node_feature_dim", c.train.tree.node_feature_dim}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"pairs_per_input", c.train.pairs_per_input},
                {"lr_tree", c.train.lr_tree},
                {"lr_adapter", c.train.lr_adapter},
                {"use_adapter", c.train.use_adapter},
                {"epsilon_headroom", c.train.epsilon_headroom},
                {"mode", to_string(c.train.mode)}};
  j["synth"] = {{"n_samples", c.synth.n_samples},
                {"feature_dim", c.synth.feature_dim},
                {"latent_dim", c.synth.latent_dim},
                {"noise_std", c.synth.noise_std},
                {"score_range", {c.synth.score_range.min, c.synth.score_range.max}},
                {"n_categories", c.synth.n_categories},
                {"difficulty_levels", c.synth.difficulty_levels},
                {"seed", c.synth.seed}};
  return j;
}

/// Strict parse: unknown keys and ill-typed values are config errors.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::check_keys(j, {"seed", "policy", "exemplars", "theta", "tolerances", "thresholds",
                           "groups", "split", "tree", "train", "synth"},
                       "config");
    if (auto it = j.find("seed"); it != j.end()) c.apply_seed(it->get<std::uint64_t>());
    if (auto it = j.find("policy"); it != j.end()) c.set_policy(it->get<std::string>());
    detail::read_opt(j, "exemplars", c.exemplars);
    detail::read_opt(j, "theta", c.theta);
    detail::read_opt(j, "tolerances", c.tolerances);
    detail::read_opt(j, "thresholds", c.thresholds);
    detail::read_opt(j, "groups", c.groups);
    if (auto it = j.find("split"); it != j.end()) {
      detail::check_keys(*it, {"holdout", "k_folds"}, "split");
      if (it->size() != 1) throw ConfigError("split takes exactly one of holdout, k_folds");
      if (it->contains("holdout")) {
        c.split = Holdout{it->at("holdout").get<double>()};
      } else {
        c.split = KFold{it->at("k_folds").get<std::size_t>()};
      }
    }
    if (auto it = j.find("tree"); it != j.end()) {
      detail::check_keys(*it, {"depth", "node_feature_dim"}, "tree");
      detail::read_opt(*it, "depth", c.train.tree.depth);
      detail::read_opt(*it, "node_feature_dim", c.train.tree.node_feature_dim);
    }
    if (auto it = j.find("train"); it != j.end()) {
      detail::check_keys(*it, {"epochs", "batch_size", "pairs_per_input", "lr_tree", "lr_adapter",
                               "use_adapter", "epsilon_headroom", "mode"},
                         "train");
      detail::read_opt(*it, "epochs", c.train.epochs);
      detail::read_opt(*it, "batch_size", c.train.batch_size);
      detail::read_opt(*it, "pairs_per_input", c.train.pairs_per_input);
      detail::read_opt(*it, "lr_tree", c.train.lr_tree);
      detail::read_opt(*it, "lr_adapter", c.train.lr_adapter);
      detail::read_opt(*it, "use_adapter", c.train.use_adapter);
      detail::read_opt(*it, "epsilon_headroom", c.train.epsilon_headroom);
      if (it->contains("mode"))
        c.train.mode = regression_mode_from_string(it->at("mode").get<std::string>());
    }
    if (auto it = j.find("synth"); it != j.end()) {
      detail::check_keys(*it, {"n_samples", "feature_dim", "latent_dim", "noise_std", "score_range",
                               "n_categories", "difficulty_levels", "seed"},
                         "synth");
      detail::read_opt(*it, "n_samples", c.synth.n_samples);
      detail::read_opt(*it, "feature_dim", c.synth.feature_dim);
      detail::read_opt(*it, "latent_dim", c.synth.latent_dim);
      detail::read_opt(*it, "noise_std", c.synth.noise_std);
      detail::read_opt(*it, "n_categories", c.synth.n_categories);
      detail::read_opt(*it, "difficulty_levels", c.synth.difficulty_levels);
      detail::read_opt(*it, "seed", c.synth.seed);
      if (auto r = it->find("score_range"); r != it->end()) {
        if (!r->is_array() || r->size() != 2) throw ConfigError("synth.score_range must be [min, max]");
        c.synth.score_range = {r->at(0).get<double>(), r->at(1).get<double>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::string config_digest(const RunConfig& c) {
  return detail::hex_digest(fnv1a(run_config_to_json(c).dump()));
}

/// Digest of the sample ids on each side of a split.
inline std::string split_digest(const Fold& fold) {
  std::uint64_t h = fnv1a("train");
  for (const Sample& s : fold.train.samples()) h = fnv1a(s.id + "\n", h);
  h = fnv1a("test", h);
  for (const Sample& s : fold.test.samples()) h = fnv1a(s.id + "\n", h);
  return detail::hex_digest(h);
}

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

inline std::string fmt_double(double v) {
  return nlohmann::json(v).dump();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

inline std::string cmd_synth(const RunConfig& cfg, const std::string& out_path) {
  cfg.synth.validate();
  const Dataset ds = synth_generate(cfg.synth);
  {
    auto out = detail::open_output(out_path);
    save_jsonl(ds, out);
  }
  std::ostringstream msg;
  msg << "wrote " << ds.size() << " samples, D=" << ds.feature_dim() << ", categories="
      << ds.categories().size() << ", score range [" << cfg.synth.score_range.min << ", "
      << cfg.synth.score_range.max << "] to " << out_path;
  return msg.str();
}

// ---------------------------------------------------------------------------
// partition

struct PartitionReport {
  GroupPartition quantile;
  GroupPartition uniform;
  std::vector<std::size_t> quantile_counts;
  std::vector<std::size_t> uniform_counts;
};

/// Quantile and uniform partitions over the training deltas, with per-group
/// training-pair counts for each.
inline PartitionReport partition_report(const Dataset& train, const ExemplarPolicy& policy,
                                        std::size_t groups) {
  const auto deltas = collect_deltas(train, policy);
  PartitionReport r;
  r.quantile = build_quantile(deltas, groups);
  r.uniform = build_uniform(deltas.front(), deltas.back(), groups);
  r.quantile_counts = group_counts(r.quantile, deltas);
  r.uniform_counts = group_counts(r.uniform, deltas);
  return r;
}

inline void write_partition_csv(const PartitionReport& r, std::ostream& out) {
  out << "group,quantile_left,quantile_right,quantile_count,uniform_left,uniform_right,uniform_count\n";
  for (std::size_t g = 0; g < r.quantile.size(); ++g) {
    out << g << ',' << detail::fmt_double(r.quantile[g].left) << ','
        << detail::fmt_double(r.quantile[g].right) << ',' << r.quantile_counts[g] << ','
        << detail::fmt_double(r.uniform[g].left) << ',' << detail::fmt_double(r.uniform[g].right)
        << ',' << r.uniform_counts[g] << '\n';
  }
}

inline std::string cmd_partition(const RunConfig& cfg, const std::string& data_path,
                                 const std::string& out_csv) {
  cfg.validate();
  const Dataset ds = load_jsonl(data_path);
  const PartitionReport r = partition_report(ds, cfg.train.policy, cfg.group_count());
  auto out = detail::open_output(out_csv);
  write_partition_csv(r, out);
  const auto [qmin, qmax] = std::minmax_element(r.quantile_counts.begin(), r.quantile_counts.end());
  const auto [umin, umax] = std::minmax_element(r.uniform_counts.begin(), r.uniform_counts.end());
  std::ostringstream msg;
  msg << r.quantile.size() << " groups; quantile counts " << *qmin << ".." << *qmax
      << ", uniform counts " << *umin << ".." << *umax << "; wrote " << out_csv;
  return msg.str();
}

// ---------------------------------------------------------------------------
// train

inline void write_training_log(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,J,J_cls,J_reg\n";
  for (const EpochLog& e : log)
    out << e.epoch << ',' << detail::fmt_double(e.total) << ',' << detail::fmt_double(e.cls) << ','
        << detail::fmt_double(e.reg) << '\n';
}

inline std::string cmd_train(const RunConfig& cfg, const std::string& data_path,
                             const std::string& checkpoint_path, const std::string& log_path) {
  cfg.validate();
  const Dataset ds = load_jsonl(data_path);
  TrainResult result = train(ds, cfg.train);
  const Checkpoint ck{std::move(result.model), {cfg.train.seed, config_digest(cfg)}};
  save_checkpoint(ck, checkpoint_path);
  if (!log_path.empty()) {
    auto out = detail::open_output(log_path);
    write_training_log(result.log, out);
  }
  std::ostringstream msg;
  msg << "trained " << to_string(cfg.train.mode) << " tree (depth " << cfg.train.tree.depth
      << ", " << ck.model.tree.parameter_count() << " parameters) on " << ds.size()
      << " samples; J " << result.log.front().total << " -> " << result.log.back().total
      << "; wrote " << checkpoint_path;
  return msg.str();
}

// ---------------------------------------------------------------------------
// eval / predict

/// Evaluation summary; R-l2 values are stored x100.
struct EvalReport {
  struct Category {
    std::size_t n = 0;
    std::optional<double> spearman;
    double r_l2_x100 = 0.0;
  };
  std::size_t n = 0;
  std::size_t exemplars = 0;
  double theta = 0.0;
  std::map<std::string, Category> per_category;
  std::optional<double> spearman_fisher;
  std::optional<double> spearman_overall;
  double r_l2_x100_mean = 0.0;  // plain mean across categories
  std::vector<CurvePoint> curve;
  std::map<std::size_t, std::vector<LayerAccuracy>> layer_accuracy;  // by tolerance K
};

inline void check_compatible(const Regressor& model, const Dataset& ds, const std::string& what) {
  if (ds.feature_dim() != model.feature_dim)
    throw DimensionError(model.feature_dim, ds.feature_dim(),
                         what + " (checkpoint D=" + std::to_string(model.feature_dim) +
                             ", data D=" + std::to_string(ds.feature_dim()) + ")");
  for (const std::string& c : ds.categories())
    if (!model.epsilon.contains(c))
      throw DataError(what + " has category '" + c + "' unknown to the checkpoint");
}

inline EvalReport evaluate(const Regressor& model, const std::vector<Prediction>& preds,
                           const Dataset& test, const Dataset& pool, const RunConfig& cfg) {
  EvalReport rep;
  rep.n = preds.size();
  rep.exemplars = model.mode == RegressionMode::contrastive ? cfg.exemplars : 0;
  rep.theta = cfg.theta;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_cat;
  std::vector<double> all_pred, all_true;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& [p, t] = by_cat[test[i].category];
    p.push_back(preds[i].score);
    t.push_back(*preds[i].truth);
    all_pred.push_back(preds[i].score);
    all_true.push_back(*preds[i].truth);
  }
  std::vector<double> rhos;
  double rl2_sum = 0.0;
  for (const auto& [cat, pt] : by_cat) {
    EvalReport::Category c;
    c.n = pt.first.size();
    try {
      c.spearman = spearman(pt.first, pt.second);
      rhos.push_back(*c.spearman);
    } catch (const Error&) {
      // fewer than 2 samples or constant scores: left undefined
    }
    const ScoreRange& range = pool.score_range(cat);
    c.r_l2_x100 = 100.0 * r_l2(pt.first, pt.second, range.max, range.min, cfg.theta);
    rl2_sum += c.r_l2_x100;
    rep.per_category[cat] = c;
  }
  if (!rhos.empty()) rep.spearman_fisher = fisher_avg(rhos);
  try {
    rep.spearman_overall = spearman(all_pred, all_true);
  } catch (const Error&) {
  }
  rep.r_l2_x100_mean = by_cat.empty() ? 0.0 : rl2_sum / static_cast<double>(by_cat.size());
  const auto thresholds = cfg.curve_thresholds();
  rep.curve = cumulative_curve(all_pred, all_true, thresholds);

  std::vector<std::size_t> predicted, truth;
  for (const Prediction& p : preds) {
    if (model.mode == RegressionMode::absolute) {
      predicted.push_back(p.groups.at(0));
      truth.push_back(locate(model.partition, *p.truth));
      continue;
    }
    for (std::size_t m = 0; m < p.groups.size(); ++m) {
      predicted.push_back(p.groups[m]);
      truth.push_back(locate(model.partition, *p.truth - p.exemplar_scores[m]));
    }
  }
  if (!predicted.empty())
    for (std::size_t k : cfg.tolerances)
      rep.layer_accuracy[k] = layer_accuracy(predicted, truth, model.tree.config.depth, k);
  return rep;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["exemplars"] = r.exemplars;
  j["theta"] = r.theta;
  j["spearman_fisher"] = opt(r.spearman_fisher);
  j["spearman_overall"] = opt(r.spearman_overall);
  j["r_l2_x100_mean"] = r.r_l2_x100_mean;
  nlohmann::ordered_json cats = nlohmann::ordered_json::object();
  for (const auto& [name, c] : r.per_category)
    cats[name] = {{"n", c.n}, {"spearman", opt(c.spearman)}, {"r_l2_x100", c.r_l2_x100}};
  j["per_category"] = cats;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const CurvePoint& p : r.curve) curve.push_back({{"threshold", p.threshold}, {"fraction", p.fraction}});
  j["curve"] = curve;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& [k, rows] : r.layer_accuracy)
    for (const LayerAccuracy& a : rows)
      layers.push_back({{"k", k}, {"layer", a.layer}, {"accuracy", a.accuracy}, {"saturated", a.saturated}});
  j["layer_accuracy"] = layers;
  return j;
}

inline nlohmann::ordered_json prediction_to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["score_pred"] = p.score;
  if (p.truth) j["score_true"] = *p.truth;
  nlohmann::ordered_json votes = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < p.per_exemplar.size(); ++m)
    votes.push_back({{"exemplar_id", p.exemplar_ids[m]},
                     {"exemplar_score", p.exemplar_scores[m]},
                     {"vote", p.per_exemplar[m]},
                     {"leaf", p.groups[m]}});
  j["per_exemplar"] = votes;
  if (p.per_exemplar.empty() && !p.groups.empty()) j["leaf"] = p.groups.front();
  return j;
}

inline void write_predictions(const std::vector<Prediction>& preds, std::ostream& out) {
  for (const Prediction& p : preds) out << prediction_to_json(p).dump() << '\n';
}

inline void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "threshold,fraction\n";
  for (const CurvePoint& p : curve)
    out << detail::fmt_double(p.threshold) << ',' << detail::fmt_double(p.fraction) << '\n';
}

inline void write_layer_accuracy_csv(const EvalReport& r, std::ostream& out) {
  out << "k,layer,accuracy,saturated\n";
  for (const auto& [k, rows] : r.layer_accuracy)
    for (const LayerAccuracy& a : rows)
      out << k << ',' << a.layer << ',' << detail::fmt_double(a.accuracy) << ','
          << (a.saturated ? 1 : 0) << '\n';
}

inline std::vector<Prediction> run_predictions(const RunConfig& cfg, const Checkpoint& ck,
                                               const Dataset& test, const Dataset& pool) {
  check_compatible(ck.model, test, "test set");
  check_compatible(ck.model, pool, "exemplar pool");
  ExemplarPolicy policy = cfg.train.policy;
  return predict_all(ck.model, test, pool, policy, cfg.exemplars, policy.random_seed);
}

inline std::string cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& test_path, const std::string& pool_path,
                            const std::string& out_dir) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset test = load_jsonl(test_path);
  const Dataset pool = load_jsonl(pool_path);
  const auto preds = run_predictions(cfg, ck, test, pool);
  const EvalReport rep = evaluate(ck.model, preds, test, pool, cfg);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "'");
  const fs::path dir(out_dir);
  detail::open_output((dir / "report.json").string()) << report_to_json(rep).dump(2) << '\n';
  {
    auto out = detail::open_output((dir / "predictions.jsonl").string());
    write_predictions(preds, out);
  }
  {
    auto out = detail::open_output((dir / "curve.csv").string());
    write_curve_csv(rep.curve, out);
  }
  {
    auto out = detail::open_output((dir / "layer_accuracy.csv").string());
    write_layer_accuracy_csv(rep, out);
  }
  std::ostringstream msg;
  msg << "evaluated " << rep.n << " samples: spearman(fisher) "
      << (rep.spearman_fisher ? std::to_string(*rep.spearman_fisher) : "n/a") << ", R-l2 x100 "
      << rep.r_l2_x100_mean << "; wrote " << out_dir;
  return msg.str();
}

inline std::string cmd_predict(const RunConfig& cfg, const std::string& checkpoint_path,
                               const std::string& test_path, const std::string& pool_path,
                               const std::string& out_path) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset test = load_jsonl(test_path);
  const Dataset pool = load_jsonl(pool_path);
  const auto preds = run_predictions(cfg, ck, test, pool);
  auto out = detail::open_output(out_path);
  write_predictions(preds, out);
  return "wrote " + std::to_string(preds.size()) + " predictions to " + out_path;
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
  std::string name;
  double spearman = 0.0;
  double r_l2_x100 = 0.0;
  std::string split_digest;
};

namespace detail {

inline AblationRow score_row(const std::string& name, const std::vector<double>& pred,
                             const Dataset& test, const Dataset& pool, double theta,
                             const std::string& digest) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_cat;
  std::vector<double> truth;
  for (std::size_t i = 0; i < test.size(); ++i) {
    by_cat[test[i].category].first.push_back(pred[i]);
    by_cat[test[i].category].second.push_back(test[i].score);
    truth.push_back(test[i].score);
  }
  std::vector<double> rhos;
  double rl2 = 0.0;
  for (const auto& [cat, pt] : by_cat) {
    rhos.push_back(spearman(pt.first, pt.second));
    const ScoreRange& r = pool.score_range(cat);
    rl2 += 100.0 * r_l2(pt.first, pt.second, r.max, r.min, theta);
  }
  return {name, fisher_avg(rhos), rl2 / static_cast<double>(by_cat.size()), digest};
}

}  // namespace detail

/// Baseline MLP, single-input tree over absolute scores, and the contrastive
/// tree, trained and scored on the same split.
inline std::vector<AblationRow> run_ablation(const RunConfig& cfg, const Dataset& ds) {
  cfg.validate();
  const Fold fold = split(ds, cfg.split, cfg.seed).front();
  const std::string digest = split_digest(fold);
  std::vector<AblationRow> rows;

  const BaselineResult base = baseline_train(fold.train, cfg.train);
  std::vector<double> pred;
  for (const Sample& s : fold.test.samples()) pred.push_back(baseline_predict(base.model, s));
  rows.push_back(detail::score_row("baseline_mlp", pred, fold.test, fold.train, cfg.theta, digest));

  for (RegressionMode mode : {RegressionMode::absolute, RegressionMode::contrastive}) {
    TrainConfig tc = cfg.train;
    tc.mode = mode;
    const TrainResult tr = train(fold.train, tc);
    const auto preds = predict_all(tr.model, fold.test, fold.train, tc.policy, cfg.exemplars,
                                   tc.policy.random_seed);
    pred.clear();
    for (const Prediction& p : preds) pred.push_back(p.score);
    rows.push_back(detail::score_row(mode == RegressionMode::absolute ? "gart_only" : "core_gart",
                                     pred, fold.test, fold.train, cfg.theta, digest));
  }
  return rows;
}

inline std::string cmd_ablate(const RunConfig& cfg, const std::string& data_path,
                              const std::string& out_path) {
  const Dataset ds = load_jsonl(data_path);
  const auto rows = run_ablation(cfg, ds);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  std::ostringstream msg;
  for (const AblationRow& r : rows) {
    j.push_back({{"name", r.name},
                 {"spearman", r.spearman},
                 {"r_l2_x100", r.r_l2_x100},
                 {"split_digest", r.split_digest}});
    msg << r.name << ": spearman " << r.spearman << ", R-l2 x100 " << r.r_l2_x100 << '\n';
  }
  detail::open_output(out_path) << j.dump(2) << '\n';
  msg << "wrote " << out_path;
  return msg.str();
}

}  // namespace corereg
