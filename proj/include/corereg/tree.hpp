#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "corereg/error.hpp"
#include "corereg/neural.hpp"
#include "corereg/partition.hpp"
#include "corereg/random.hpp"

namespace corereg {

/// Shape of a group-aware regression tree. `depth` counts binary decision
/// layers, so the tree has 2^depth leaves and 2^depth - 1 internal nodes.
struct TreeConfig {
  std::size_t depth = 5;
  std::size_t node_feature_dim = 256;
  std::size_t input_dim = 0;

  std::size_t leaves() const { return std::size_t{1} << depth; }
  std::size_t internal_nodes() const { return leaves() - 1; }

  void validate() const {
    if (depth == 0 || depth > 20) throw ConfigError("tree depth must lie in [1, 20]");
    if (node_feature_dim == 0) throw ConfigError("node_feature_dim must be positive");
    if (input_dim == 0) throw ConfigError("tree input_dim must be positive");
  }

  bool operator==(const TreeConfig&) const = default;
};

/// Internal decision node: the updated feature h = relu(W u + b) is passed to
/// both children, and sigmoid(logit(h)) is the probability of the left child.
struct TreeNode {
  MLPBlock hidden;
  MLPBlock logit;
};

/// Nodes are stored breadth-first, left to right. Leaf r reads the feature of
/// its parent node and regresses its in-group position through a sigmoid.
struct TreeModel {
  TreeConfig config;
  MLPBlock root;
  std::vector<TreeNode> nodes;
  std::vector<MLPBlock> leaf_heads;

  static TreeModel create(const TreeConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto in = static_cast<Eigen::Index>(cfg.input_dim);
    const auto f = static_cast<Eigen::Index>(cfg.node_feature_dim);
    TreeModel m;
    m.config = cfg;
    m.root = make_block({in, f}, {Activation::relu}, rng);
    for (std::size_t k = 0; k < cfg.internal_nodes(); ++k) {
      TreeNode node;
      node.hidden = make_block({f, f}, {Activation::relu}, rng);
      node.logit = make_block({f, 1}, {Activation::identity}, rng);
      m.nodes.push_back(std::move(node));
    }
    for (std::size_t r = 0; r < cfg.leaves(); ++r)
      m.leaf_heads.push_back(make_block({f, 1}, {Activation::sigmoid}, rng));
    return m;
  }

  void validate() const {
    config.validate();
    root.validate();
    if (nodes.size() != config.internal_nodes() || leaf_heads.size() != config.leaves())
      throw ConfigError("tree node count does not match its depth");
    const auto f = static_cast<Eigen::Index>(config.node_feature_dim);
    if (root.in_dim() != static_cast<Eigen::Index>(config.input_dim) || root.out_dim() != f)
      throw DimensionError(config.input_dim, root.in_dim(), "tree root block");
    for (const TreeNode& n : nodes) {
      n.hidden.validate();
      n.logit.validate();
      if (n.hidden.in_dim() != f || n.hidden.out_dim() != f || n.logit.in_dim() != f ||
          n.logit.out_dim() != 1)
        throw DimensionError(config.node_feature_dim, n.hidden.in_dim(), "tree node");
    }
    for (const MLPBlock& l : leaf_heads) {
      l.validate();
      if (l.in_dim() != f || l.out_dim() != 1)
        throw DimensionError(config.node_feature_dim, l.in_dim(), "tree leaf head");
    }
  }

  TreeModel zeros_like() const {
    TreeModel z;
    z.config = config;
    z.root = root.zeros_like();
    for (const TreeNode& n : nodes) z.nodes.push_back({n.hidden.zeros_like(), n.logit.zeros_like()});
    for (const MLPBlock& l : leaf_heads) z.leaf_heads.push_back(l.zeros_like());
    return z;
  }

  /// Every block with a stable name, in checkpoint order.
  template <typename Self, typename Fn>
  static void for_each_block(Self& self, Fn&& fn) {
    fn(std::string("root"), self.root);
    for (std::size_t k = 0; k < self.nodes.size(); ++k) {
      fn("node." + std::to_string(k) + ".hidden", self.nodes[k].hidden);
      fn("node." + std::to_string(k) + ".logit", self.nodes[k].logit);
    }
    for (std::size_t r = 0; r < self.leaf_heads.size(); ++r)
      fn("leaf." + std::to_string(r), self.leaf_heads[r]);
  }

  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    for_each_block(*this, [&](const std::string&, MLPBlock& b) {
      for (auto s : b.parameters()) out.push_back(s);
    });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block(*this, [&](const std::string&, const MLPBlock& b) { n += b.parameter_count(); });
    return n;
  }

  static std::size_t parent_of_leaf(std::size_t internal, std::size_t leaf) {
    return (internal + leaf - 1) / 2;
  }
};

/// Forward results for a batch; column b belongs to the b-th pair.
struct TreeOutput {
  Matrix leaf_probs;        // R x B, path products
  Matrix leaf_regressions;  // R x B, sigmoid outputs in [0, 1]
  Matrix node_probs;        // (R-1) x B, left-branch probability per node, breadth-first

  std::size_t leaves() const { return static_cast<std::size_t>(leaf_probs.rows()); }
  std::size_t batch() const { return static_cast<std::size_t>(leaf_probs.cols()); }

  /// Left-branch probabilities of the nodes in decision layer `layer` (0-based).
  Matrix layer_probs(std::size_t layer) const {
    const auto first = static_cast<Eigen::Index>((std::size_t{1} << layer) - 1);
    const auto count = static_cast<Eigen::Index>(std::size_t{1} << layer);
    return node_probs.middleRows(first, count);
  }
};

struct TreeTape {
  const TreeModel* model = nullptr;
  Tape root;
  std::vector<Tape> hidden;
  std::vector<Tape> logit;
  std::vector<Tape> leaves;
  Matrix reach;  // (2R-1) x B probability of reaching each heap position
};

struct TreeForward {
  TreeOutput output;
  TreeTape tape;
};

inline TreeForward tree_forward(const TreeModel& model, const Matrix& pairs) {
  const TreeConfig& cfg = model.config;
  if (pairs.rows() != static_cast<Eigen::Index>(cfg.input_dim))
    throw DimensionError(cfg.input_dim, pairs.rows(), "tree input");
  const std::size_t internal = cfg.internal_nodes();
  const std::size_t leaves = cfg.leaves();
  const Eigen::Index batch = pairs.cols();

  TreeForward fw;
  TreeTape& tape = fw.tape;
  TreeOutput& out = fw.output;
  tape.model = &model;
  tape.root = forward(model.root, pairs);
  tape.hidden.reserve(internal);
  tape.logit.reserve(internal);
  out.node_probs.resize(static_cast<Eigen::Index>(internal), batch);
  for (std::size_t k = 0; k < internal; ++k) {
    const Matrix& in = k == 0 ? tape.root.output() : tape.hidden[(k - 1) / 2].output();
    tape.hidden.push_back(forward(model.nodes[k].hidden, in));
    tape.logit.push_back(forward(model.nodes[k].logit, tape.hidden[k].output()));
    out.node_probs.row(static_cast<Eigen::Index>(k)) =
        tape.logit[k].output().row(0).unaryExpr([](double z) { return sigmoid(z); });
  }

  tape.reach.resize(static_cast<Eigen::Index>(internal + leaves), batch);
  tape.reach.row(0).setOnes();
  for (std::size_t k = 0; k < internal; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const auto q = tape.reach.row(kk).array();
    const auto p = out.node_probs.row(kk).array();
    tape.reach.row(2 * kk + 1) = (q * p).matrix();
    tape.reach.row(2 * kk + 2) = (q * (1.0 - p)).matrix();
  }
  out.leaf_probs = tape.reach.bottomRows(static_cast<Eigen::Index>(leaves));

  out.leaf_regressions.resize(static_cast<Eigen::Index>(leaves), batch);
  tape.leaves.reserve(leaves);
  for (std::size_t r = 0; r < leaves; ++r) {
    const std::size_t parent = TreeModel::parent_of_leaf(internal, r);
    tape.leaves.push_back(forward(model.leaf_heads[r], tape.hidden[parent].output()));
    out.leaf_regressions.row(static_cast<Eigen::Index>(r)) = tape.leaves[r].output().row(0);
  }
  return fw;
}

inline TreeForward tree_forward(const TreeModel& model, const Vector& pair) {
  return tree_forward(model, Matrix(pair));
}

/// Clamp applied to probabilities inside the BCE logs.
inline constexpr double kProbClamp = 1e-7;

/// Batch-mean objective and its gradients w.r.t. the tree outputs.
struct TreeLoss {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  Matrix d_leaf_probs;        // R x B
  Matrix d_leaf_regressions;  // R x B
};

/// J = J_cls + J_reg averaged over the batch, with
/// J_cls = -sum_r [l_r log P_r + (1 - l_r) log(1 - P_r)] and
/// J_reg = (sigma_hat_i - sigma)^2 on the ground-truth leaf i.
inline TreeLoss tree_loss(const TreeOutput& out, std::span<const PairLabel> labels) {
  const std::size_t leaves = out.leaves();
  const std::size_t batch = out.batch();
  if (labels.size() != batch)
    throw DimensionError(batch, labels.size(), "tree loss labels");
  TreeLoss loss;
  loss.d_leaf_probs = Matrix::Zero(static_cast<Eigen::Index>(leaves), static_cast<Eigen::Index>(batch));
  loss.d_leaf_regressions = Matrix::Zero(loss.d_leaf_probs.rows(), loss.d_leaf_probs.cols());
  const double scale = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const PairLabel& label = labels[b];
    if (label.onehot.size() != leaves)
      throw DimensionError(leaves, label.onehot.size(), "pair label");
    std::size_t ones = 0;
    for (double l : label.onehot) {
      if (l != 0.0 && l != 1.0) throw ConfigError("pair label is not one-hot");
      ones += l == 1.0;
    }
    if (ones != 1 || label.onehot[label.group] != 1.0)
      throw ConfigError("pair label is not one-hot");
    const auto bb = static_cast<Eigen::Index>(b);
    for (std::size_t r = 0; r < leaves; ++r) {
      const auto rr = static_cast<Eigen::Index>(r);
      const double p = out.leaf_probs(rr, bb);
      const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      const bool live = p > kProbClamp && p < 1.0 - kProbClamp;
      if (label.onehot[r] == 1.0) {
        loss.cls -= std::log(pc) * scale;
        if (live) loss.d_leaf_probs(rr, bb) = -scale / pc;
      } else {
        loss.cls -= std::log(1.0 - pc) * scale;
        if (live) loss.d_leaf_probs(rr, bb) = scale / (1.0 - pc);
      }
    }
    const auto gi = static_cast<Eigen::Index>(label.group);
    const double diff = out.leaf_regressions(gi, bb) - label.sigma;
    loss.reg += diff * diff * scale;
    loss.d_leaf_regressions(gi, bb) = 2.0 * diff * scale;
  }
  loss.total = loss.cls + loss.reg;
  return loss;
}

/// Zero-based index of the most probable leaf; exact ties go to the lower index.
inline std::size_t best_leaf(const TreeOutput& out, std::size_t column = 0) {
  const auto col = out.leaf_probs.col(static_cast<Eigen::Index>(column));
  Eigen::Index best = 0;
  for (Eigen::Index r = 1; r < col.size(); ++r)
    if (col[r] > col[best]) best = r;
  return static_cast<std::size_t>(best);
}

/// Relative score: sigma_hat of the most probable leaf mapped into its group.
inline double decode_delta(const TreeOutput& out, const GroupPartition& p,
                           std::size_t column = 0) {
  if (p.size() != out.leaves())
    throw DimensionError(p.size(), out.leaves(), "partition vs tree leaves");
  const std::size_t r = best_leaf(out, column);
  const double s = out.leaf_regressions(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(column));
  return s * p[r].width() + p[r].left;
}

struct TreeGradient {
  TreeModel params;
  Matrix input;  // dJ / d pairs
};

/// Gradients of the loss given dJ/dP and dJ/dsigma_hat, through the path
/// products and the shared node features.
inline TreeGradient tree_backward(const TreeModel& model, const TreeForward& fw,
                                  const Matrix& d_leaf_probs, const Matrix& d_leaf_regressions) {
  const TreeTape& tape = fw.tape;
  const TreeOutput& out = fw.output;
  if (tape.model != &model || tape.hidden.size() != model.nodes.size())
    throw ConfigError("tree tape does not belong to this model");
  const std::size_t internal = model.config.internal_nodes();
  const std::size_t leaves = model.config.leaves();
  const Eigen::Index batch = static_cast<Eigen::Index>(out.batch());
  if (d_leaf_probs.rows() != static_cast<Eigen::Index>(leaves) || d_leaf_probs.cols() != batch ||
      d_leaf_regressions.rows() != d_leaf_probs.rows() || d_leaf_regressions.cols() != batch)
    throw DimensionError(leaves, d_leaf_probs.rows(), "tree upstream gradient");

  TreeGradient grad{model.zeros_like(), Matrix()};

  // below(k) = dJ/d reach(k): the gradient flowing into heap position k.
  Matrix below(static_cast<Eigen::Index>(internal + leaves), batch);
  below.bottomRows(static_cast<Eigen::Index>(leaves)) = d_leaf_probs;
  Matrix d_logit(static_cast<Eigen::Index>(internal), batch);
  for (std::size_t k = internal; k-- > 0;) {
    const auto kk = static_cast<Eigen::Index>(k);
    const auto p = out.node_probs.row(kk).array();
    const auto left = below.row(2 * kk + 1).array();
    const auto right = below.row(2 * kk + 2).array();
    below.row(kk) = (p * left + (1.0 - p) * right).matrix();
    const auto d_p = tape.reach.row(kk).array() * (left - right);
    d_logit.row(kk) = (d_p * p * (1.0 - p)).matrix();
  }

  const auto f = static_cast<Eigen::Index>(model.config.node_feature_dim);
  std::vector<Matrix> d_feature(internal, Matrix::Zero(f, batch));
  for (std::size_t r = 0; r < leaves; ++r) {
    const std::size_t parent = TreeModel::parent_of_leaf(internal, r);
    d_feature[parent] += backward(model.leaf_heads[r], tape.leaves[r],
                                  d_leaf_regressions.row(static_cast<Eigen::Index>(r)),
                                  grad.params.leaf_heads[r]);
  }
  Matrix d_root;
  for (std::size_t k = internal; k-- > 0;) {
    d_feature[k] += backward(model.nodes[k].logit, tape.logit[k],
                             d_logit.row(static_cast<Eigen::Index>(k)), grad.params.nodes[k].logit);
    Matrix d_in = backward(model.nodes[k].hidden, tape.hidden[k], d_feature[k],
                           grad.params.nodes[k].hidden);
    if (k == 0) {
      d_root = std::move(d_in);
    } else {
      d_feature[(k - 1) / 2] += d_in;
    }
  }
  grad.input = backward(model.root, tape.root, d_root, grad.params.root);
  return grad;
}

inline TreeGradient tree_backward(const TreeModel& model, const TreeForward& fw,
                                  const TreeLoss& loss) {
  return tree_backward(model, fw, loss.d_leaf_probs, loss.d_leaf_regressions);
}

}  // namespace corereg
