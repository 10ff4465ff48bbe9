#pragma once

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corereg/error.hpp"
#include "corereg/neural.hpp"
#include "corereg/partition.hpp"
#include "corereg/pipeline.hpp"
#include "corereg/tree.hpp"

namespace corereg {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "corereg-checkpoint";

/// Exact hexadecimal float literal, e.g. "0x1.8p+1", "-0x0p+0",
/// "0x0.0000000000001p-1022". Independent of the C library's %a flavour.
inline std::string format_hex(double v) {
  if (!std::isfinite(v)) throw NumericError("cannot serialize a non-finite value");
  const auto bits = std::bit_cast<std::uint64_t>(v);
  const bool negative = bits >> 63;
  const auto exponent = static_cast<int>((bits >> 52) & 0x7ff);
  std::uint64_t mantissa = bits & ((std::uint64_t{1} << 52) - 1);
  std::string out = negative ? "-0x" : "0x";
  if (exponent == 0 && mantissa == 0) return out + "0p+0";
  out += exponent == 0 ? "0" : "1";
  if (mantissa != 0) {
    int digits = 13;
    while ((mantissa & 0xf) == 0) {
      mantissa >>= 4;
      --digits;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string frac(static_cast<std::size_t>(digits), '0');
    for (int i = digits - 1; i >= 0; --i) {
      frac[static_cast<std::size_t>(i)] = kHex[mantissa & 0xf];
      mantissa >>= 4;
    }
    out += "." + frac;
  }
  const int e = exponent == 0 ? -1022 : exponent - 1023;
  out += e < 0 ? "p-" : "p+";
  out += std::to_string(e < 0 ? -e : e);
  return out;
}

inline double parse_hex(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw DataError("malformed float literal '" + s + "'");
  return v;
}

namespace detail {

/// Row-major hex literals with an explicit [rows, cols] shape.
inline nlohmann::ordered_json array_to_json(const std::string& name, const Matrix& m) {
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(format_hex(m(r, c)));
  return {{"name", name}, {"shape", {m.rows(), m.cols()}}, {"hex", values}};
}

inline nlohmann::ordered_json block_to_json(const std::string& name, const MLPBlock& b) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const AffineLayer& l = b.layers[i];
    const std::string prefix = name + "." + std::to_string(i);
    layers.push_back({{"activation", to_string(b.activations[i])},
                      {"weight", array_to_json(prefix + ".weight", l.weight)},
                      {"bias", array_to_json(prefix + ".bias", l.bias)}});
  }
  return {{"name", name}, {"layers", layers}};
}

inline Matrix array_from_json(const nlohmann::json& j) {
  const auto& shape = j.at("shape");
  const auto rows = shape.at(0).get<Eigen::Index>();
  const auto cols = shape.at(1).get<Eigen::Index>();
  const auto& values = j.at("hex");
  if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows * cols))
    throw DataError("array '" + j.value("name", std::string("?")) + "' does not match its shape");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_hex(values[k++].get<std::string>());
  return m;
}

inline MLPBlock block_from_json(const nlohmann::json& j, const std::string& expected_name) {
  if (j.at("name").get<std::string>() != expected_name)
    throw DataError("expected block '" + expected_name + "', found '" +
                    j.at("name").get<std::string>() + "'");
  MLPBlock b;
  for (const auto& layer : j.at("layers")) {
    b.activations.push_back(activation_from_string(layer.at("activation").get<std::string>()));
    Matrix bias = array_from_json(layer.at("bias"));
    if (bias.cols() != 1) throw DataError("bias arrays must have one column");
    b.layers.push_back({array_from_json(layer.at("weight")), bias.col(0)});
  }
  b.validate();
  return b;
}

}  // namespace detail

/// Provenance recorded alongside the model.
struct TrainingRecord {
  std::uint64_t seed = 0;
  std::string config_digest;
};

struct Checkpoint {
  Regressor model;
  TrainingRecord training;
};

inline nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ck) {
  const Regressor& m = ck.model;
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["mode"] = to_string(m.mode);
  j["feature_dim"] = m.feature_dim;
  j["tree_config"] = {{"depth", m.tree.config.depth},
                      {"node_feature_dim", m.tree.config.node_feature_dim},
                      {"input_dim", m.tree.config.input_dim}};
  nlohmann::ordered_json bounds = nlohmann::ordered_json::array();
  for (const Interval& g : m.partition.bounds()) bounds.push_back({format_hex(g.left), format_hex(g.right)});
  j["partition"] = {{"strategy", to_string(m.partition.strategy())}, {"bounds", bounds}};
  nlohmann::ordered_json eps = nlohmann::ordered_json::object();
  for (const auto& [cat, e] : m.epsilon) eps[cat] = format_hex(e);
  j["epsilon"] = eps;
  j["policy"] = {{"match_category", m.policy.match_category},
                 {"match_difficulty", m.policy.match_difficulty},
                 {"random_seed", m.policy.random_seed}};
  j["training"] = {{"seed", ck.training.seed}, {"config_digest", ck.training.config_digest}};
  j["adapter"] = m.adapter ? detail::block_to_json("adapter", *m.adapter)
                           : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  TreeModel::for_each_block(m.tree, [&](const std::string& name, const MLPBlock& b) {
    blocks.push_back(detail::block_to_json(name, b));
  });
  j["tree"] = blocks;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw DataError("not a checkpoint document");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw DataError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    Regressor& m = ck.model;
    m.mode = regression_mode_from_string(j.at("mode").get<std::string>());
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto& tc = j.at("tree_config");
    TreeConfig cfg;
    cfg.depth = tc.at("depth").get<std::size_t>();
    cfg.node_feature_dim = tc.at("node_feature_dim").get<std::size_t>();
    cfg.input_dim = tc.at("input_dim").get<std::size_t>();
    cfg.validate();

    std::vector<Interval> bounds;
    for (const auto& b : j.at("partition").at("bounds"))
      bounds.push_back({parse_hex(b.at(0).get<std::string>()), parse_hex(b.at(1).get<std::string>())});
    m.partition = GroupPartition(std::move(bounds),
                                 partition_strategy_from_string(j.at("partition").at("strategy").get<std::string>()));
    for (const auto& [cat, e] : j.at("epsilon").items()) m.epsilon[cat] = parse_hex(e.get<std::string>());
    const auto& pol = j.at("policy");
    m.policy.match_category = pol.at("match_category").get<bool>();
    m.policy.match_difficulty = pol.at("match_difficulty").get<bool>();
    m.policy.random_seed = pol.at("random_seed").get<std::uint64_t>();
    ck.training.seed = j.at("training").at("seed").get<std::uint64_t>();
    ck.training.config_digest = j.at("training").at("config_digest").get<std::string>();
    if (!j.at("adapter").is_null()) m.adapter = detail::block_from_json(j.at("adapter"), "adapter");

    m.tree.config = cfg;
    m.tree.nodes.resize(cfg.internal_nodes());
    m.tree.leaf_heads.resize(cfg.leaves());
    const auto& blocks = j.at("tree");
    std::size_t k = 0;
    TreeModel::for_each_block(m.tree, [&](const std::string& name, MLPBlock& b) {
      if (k >= blocks.size()) throw DataError("checkpoint is missing block '" + name + "'");
      b = detail::block_from_json(blocks[k++], name);
    });
    if (k != blocks.size()) throw DataError("checkpoint has extra tree blocks");
    m.tree.validate();
    if (m.partition.size() != cfg.leaves())
      throw DataError("partition group count does not match tree leaves");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  return checkpoint_to_json(ck).dump(1) + "\n";
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << serialize_checkpoint(ck);
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace corereg
