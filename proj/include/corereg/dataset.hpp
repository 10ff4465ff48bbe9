#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "corereg/error.hpp"
#include "corereg/random.hpp"

namespace corereg {

/// One action instance. `feature` is the pooled clip descriptor produced by
/// whatever upstream extractor the caller uses.
struct Sample {
  std::string id;
  std::string category;
  std::optional<double> difficulty;
  double score = 0.0;
  Eigen::VectorXd feature;
};

struct ScoreRange {
  double min = 0.0;
  double max = 0.0;

  double width() const { return max - min; }
  bool operator==(const ScoreRange&) const = default;
};

/// Immutable collection of samples sharing one feature dimension, with a
/// score range per category.
class Dataset {
 public:
  Dataset() = default;

  /// Ranges missing from `ranges` are computed from the samples.
  Dataset(std::vector<Sample> samples, std::size_t feature_dim,
          std::map<std::string, ScoreRange> ranges = {})
      : samples_(std::move(samples)), feature_dim_(feature_dim) {
    if (feature_dim_ == 0) throw DataError("feature_dim must be positive");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const Sample& s = samples_[i];
      if (static_cast<std::size_t>(s.feature.size()) != feature_dim_)
        throw DimensionError(feature_dim_, s.feature.size(),
                             "sample '" + s.id + "'");
      if (!std::isfinite(s.score))
        throw DataError("non-finite score for sample '" + s.id + "'");
      if (s.difficulty && !(*s.difficulty > 0.0))
        throw DataError("difficulty must be positive for sample '" + s.id +
                        "'");
      if (!s.feature.allFinite())
        throw DataError("non-finite feature for sample '" + s.id + "'");
    }
    for (const Sample& s : samples_) {
      if (ranges.contains(s.category)) continue;
      auto [it, fresh] = ranges_.try_emplace(s.category, ScoreRange{s.score, s.score});
      if (!fresh) {
        it->second.min = std::min(it->second.min, s.score);
        it->second.max = std::max(it->second.max, s.score);
      }
    }
    for (auto& [cat, r] : ranges) {
      if (!(r.min < r.max))
        throw DataError("score range for category '" + cat +
                        "' must satisfy min < max");
      ranges_[cat] = r;
    }
    for (const Sample& s : samples_) {
      const ScoreRange& r = ranges_.at(s.category);
      if (s.score < r.min || s.score > r.max)
        throw DataError("score of sample '" + s.id +
                        "' outside its category range");
    }
  }

  std::span<const Sample> samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::map<std::string, ScoreRange>& score_ranges() const { return ranges_; }

  const ScoreRange& score_range(const std::string& category) const {
    auto it = ranges_.find(category);
    if (it == ranges_.end())
      throw DataError("unknown category '" + category + "'");
    return it->second;
  }

  std::set<std::string> categories() const {
    std::set<std::string> out;
    for (const Sample& s : samples_) out.insert(s.category);
    return out;
  }

  /// Samples at `indices`, keeping this dataset's category ranges.
  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<Sample> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) picked.push_back(samples_.at(i));
    Dataset out;
    out.samples_ = std::move(picked);
    out.feature_dim_ = feature_dim_;
    for (const Sample& s : out.samples_) out.ranges_[s.category] = ranges_.at(s.category);
    return out;
  }

 private:
  std::vector<Sample> samples_;
  std::size_t feature_dim_ = 0;
  std::map<std::string, ScoreRange> ranges_;
};

// ---------------------------------------------------------------------------
// JSON-lines I/O

namespace detail {

inline Sample sample_from_json(const nlohmann::json& j, std::size_t line) {
  try {
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.category = j.at("category").get<std::string>();
    if (auto it = j.find("difficulty"); it != j.end() && !it->is_null())
      s.difficulty = it->get<double>();
    s.score = j.at("score").get<double>();
    const auto& f = j.at("feature");
    if (!f.is_array()) throw ParseError(line, "'feature' must be an array");
    s.feature.resize(static_cast<Eigen::Index>(f.size()));
    for (std::size_t k = 0; k < f.size(); ++k) s.feature[k] = f[k].get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line, e.what());
  }
}

}  // namespace detail

/// Reads a dataset. An optional first line of the form
/// {"feature_dim": D, "score_range": {"<category>": [min, max]}} fixes the
/// dimension and overrides computed ranges.
inline Dataset load_jsonl(std::istream& in) {
  std::vector<Sample> samples;
  std::optional<std::size_t> dim;
  std::map<std::string, ScoreRange> ranges;
  std::string text;
  std::size_t line = 0;
  bool first_record = true;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, e.what());
    }
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    if (first_record && !j.contains("id") && j.contains("feature_dim")) {
      first_record = false;
      try {
        dim = j.at("feature_dim").get<std::size_t>();
        if (auto it = j.find("score_range"); it != j.end()) {
          for (auto& [cat, mm] : it->items()) {
            if (!mm.is_array() || mm.size() != 2)
              throw ParseError(line, "score_range entries must be [min, max]");
            ranges[cat] = {mm[0].get<double>(), mm[1].get<double>()};
          }
        }
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, e.what());
      }
      continue;
    }
    first_record = false;
    Sample s = detail::sample_from_json(j, line);
    if (!dim) dim = static_cast<std::size_t>(s.feature.size());
    if (static_cast<std::size_t>(s.feature.size()) != *dim)
      throw DimensionError(*dim, s.feature.size(), "line " + std::to_string(line));
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw EmptyDatasetError("no samples in input");
  return Dataset(std::move(samples), *dim, std::move(ranges));
}

inline Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return load_jsonl(in);
}

inline nlohmann::ordered_json sample_to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["category"] = s.category;
  if (s.difficulty) j["difficulty"] = *s.difficulty;
  j["score"] = s.score;
  j["feature"] = std::vector<double>(s.feature.data(), s.feature.data() + s.feature.size());
  return j;
}

/// Writes the header record followed by one line per sample.
inline void save_jsonl(const Dataset& ds, std::ostream& out) {
  nlohmann::ordered_json header;
  header["feature_dim"] = ds.feature_dim();
  nlohmann::ordered_json ranges = nlohmann::ordered_json::object();
  for (const auto& [cat, r] : ds.score_ranges()) ranges[cat] = {r.min, r.max};
  header["score_range"] = ranges;
  out << header.dump() << '\n';
  for (const Sample& s : ds.samples()) out << sample_to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthConfig {
  std::size_t n_samples = 500;
  std::size_t feature_dim = 64;
  std::size_t latent_dim = 4;
  double noise_std = 0.05;
  ScoreRange score_range{30.0, 100.0};
  std::size_t n_categories = 1;
  /// Discrete difficulty values drawn uniformly per sample; empty means none.
  std::vector<double> difficulty_levels;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_samples == 0) throw ConfigError("n_samples must be positive");
    if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
    if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
    if (n_categories == 0) throw ConfigError("n_categories must be positive");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
    if (!(score_range.min < score_range.max))
      throw ConfigError("score_range must satisfy min < max");
    for (double dd : difficulty_levels)
      if (!(dd > 0.0)) throw ConfigError("difficulty levels must be positive");
  }
};

inline std::string synth_category_name(std::size_t c) {
  return "action" + std::to_string(c);
}

/// Width of the latent embedding: polynomial lift plus a category one-hot.
inline std::size_t synth_embedding_dim(const SynthConfig& cfg) {
  return cfg.latent_dim + cfg.n_categories;
}

/// Smooth embedding of quality and category. With u = 2t - 1 for the
/// normalized quality t, the lift is (u, u^2, ..., u^L, onehot(category));
/// the first coordinate is strictly increasing in quality.
inline Eigen::VectorXd synth_embedding(const SynthConfig& cfg, double quality,
                                       std::size_t category) {
  const double t = (quality - cfg.score_range.min) / cfg.score_range.width();
  const double u = 2.0 * t - 1.0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(synth_embedding_dim(cfg)));
  double p = 1.0;
  for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
    p *= u;
    g[static_cast<Eigen::Index>(k)] = p;
  }
  g[static_cast<Eigen::Index>(cfg.latent_dim + category)] = 1.0;
  return g;
}

/// The seed-fixed linear map from embedding to feature space. It consumes the
/// first draws of the generator stream, so it is reproducible on its own.
inline Eigen::MatrixXd synth_mixing_matrix(const SynthConfig& cfg, Rng& rng) {
  const auto rows = static_cast<Eigen::Index>(cfg.feature_dim);
  const auto cols = static_cast<Eigen::Index>(synth_embedding_dim(cfg));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = scale * rng.normal();
  return a;
}

inline Eigen::MatrixXd synth_mixing_matrix(const SynthConfig& cfg) {
  Rng rng(cfg.seed);
  return synth_mixing_matrix(cfg, rng);
}

/// Deterministic dataset with a known score oracle: score = latent quality q,
/// feature = A * g(q, category) + N(0, noise_std^2).
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Eigen::MatrixXd a = synth_mixing_matrix(cfg, rng);
  std::vector<Sample> samples;
  samples.reserve(cfg.n_samples);
  const std::size_t width = std::to_string(cfg.n_samples - 1).size();
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Sample s;
    std::string num = std::to_string(i);
    s.id = "s" + std::string(width - num.size(), '0') + num;
    const std::size_t cat = static_cast<std::size_t>(rng.below(cfg.n_categories));
    s.category = synth_category_name(cat);
    s.score = rng.uniform(cfg.score_range.min, cfg.score_range.max);
    if (!cfg.difficulty_levels.empty())
      s.difficulty = cfg.difficulty_levels[rng.below(cfg.difficulty_levels.size())];
    s.feature = a * synth_embedding(cfg, s.score, cat);
    for (Eigen::Index k = 0; k < s.feature.size(); ++k)
      s.feature[k] += cfg.noise_std * rng.normal();
    samples.push_back(std::move(s));
  }
  std::map<std::string, ScoreRange> ranges;
  for (std::size_t c = 0; c < cfg.n_categories; ++c)
    ranges[synth_category_name(c)] = cfg.score_range;
  return Dataset(std::move(samples), cfg.feature_dim, std::move(ranges));
}

// ---------------------------------------------------------------------------
// Exemplar selection

struct ExemplarPolicy {
  bool match_category = true;
  bool match_difficulty = false;
  std::uint64_t random_seed = 0;

  void validate() const {
    if (match_difficulty && !match_category)
      throw ConfigError("difficulty matching requires category matching");
  }

  /// True when `candidate` may serve as an exemplar for `input`.
  bool admits(const Sample& input, const Sample& candidate) const {
    if (candidate.id == input.id) return false;
    if (match_category && candidate.category != input.category) return false;
    if (match_difficulty && candidate.difficulty != input.difficulty) return false;
    return true;
  }
};

inline std::vector<std::size_t> eligible_exemplars(const Sample& input,
                                                   const Dataset& pool,
                                                   const ExemplarPolicy& policy) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (policy.admits(input, pool[i])) out.push_back(i);
  return out;
}

/// Indices of `m` distinct policy-matched exemplars, uniform without
/// replacement.
inline std::vector<std::size_t> select_exemplar_indices(const Sample& input,
                                                        const Dataset& pool,
                                                        const ExemplarPolicy& policy,
                                                        std::size_t m, Rng& rng) {
  policy.validate();
  if (m == 0) throw ConfigError("exemplar count must be positive");
  std::vector<std::size_t> eligible = eligible_exemplars(input, pool, policy);
  if (eligible.size() < m) throw InsufficientExemplarsError(eligible.size(), m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(m);
  return eligible;
}

inline std::vector<Sample> select_exemplars(const Sample& input, const Dataset& pool,
                                            const ExemplarPolicy& policy,
                                            std::size_t m, Rng& rng) {
  std::vector<Sample> out;
  for (std::size_t i : select_exemplar_indices(input, pool, policy, m, rng))
    out.push_back(pool[i]);
  return out;
}

/// Draws with a stream derived from the policy seed and the input id, so the
/// result does not depend on call order.
inline std::vector<Sample> select_exemplars(const Sample& input, const Dataset& pool,
                                            const ExemplarPolicy& policy,
                                            std::size_t m) {
  Rng rng(derive_seed(policy.random_seed, input.id));
  return select_exemplars(input, pool, policy, m, rng);
}

// ---------------------------------------------------------------------------
// Splitting

struct Holdout {
  double test_fraction = 0.25;
};

struct KFold {
  std::size_t k = 4;
};

using SplitMode = std::variant<Holdout, KFold>;

struct Fold {
  Dataset train;
  Dataset test;
};

inline std::vector<Fold> split(const Dataset& ds, const SplitMode& mode,
                               std::uint64_t seed) {
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  auto make_fold = [&](std::vector<std::size_t> test_idx) {
    std::vector<bool> in_test(ds.size(), false);
    for (std::size_t i : test_idx) in_test[i] = true;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (!in_test[i]) train_idx.push_back(i);
    std::sort(test_idx.begin(), test_idx.end());
    return Fold{ds.subset(train_idx), ds.subset(test_idx)};
  };

  std::vector<Fold> folds;
  if (const auto* h = std::get_if<Holdout>(&mode)) {
    if (!(h->test_fraction > 0.0 && h->test_fraction < 1.0))
      throw ConfigError("holdout fraction must lie in (0, 1)");
    const auto n_test = static_cast<std::size_t>(
        std::llround(h->test_fraction * static_cast<double>(ds.size())));
    if (n_test == 0 || n_test >= ds.size())
      throw SplitError("holdout of " + std::to_string(ds.size()) +
                       " samples leaves an empty side");
    folds.push_back(make_fold({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test)}));
  } else {
    const std::size_t k = std::get<KFold>(mode).k;
    if (k < 2) throw ConfigError("k-fold requires k >= 2");
    if (ds.size() < k)
      throw SplitError("dataset of " + std::to_string(ds.size()) +
                       " samples is smaller than k = " + std::to_string(k));
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<std::size_t> test_idx;
      for (std::size_t i = f; i < order.size(); i += k) test_idx.push_back(order[i]);
      folds.push_back(make_fold(std::move(test_idx)));
    }
  }
  return folds;
}

}  // namespace corereg
