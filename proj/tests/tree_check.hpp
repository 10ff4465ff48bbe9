#pragma once

// Finite-difference check of the full tree objective, shared by the unit and
// acceptance tests.

#include <algorithm>
#include <vector>

#include "corereg/neural.hpp"
#include "corereg/random.hpp"
#include "corereg/tree.hpp"

namespace treecheck {

using namespace corereg;

inline double objective(const TreeModel& model, const Matrix& pairs,
                        const std::vector<PairLabel>& labels) {
  return tree_loss(tree_forward(model, pairs).output, labels).total;
}

/// Largest relative error between tree_backward and central differences,
/// over every parameter and every input entry.
inline double max_relative_error(const TreeModel& model, const Matrix& pairs,
                                 const std::vector<PairLabel>& labels, double step) {
  TreeModel probe = model;
  Matrix input = pairs;
  const TreeForward fw = tree_forward(probe, input);
  const TreeLoss loss = tree_loss(fw.output, labels);
  TreeGradient grad = tree_backward(probe, fw, loss);

  auto f = [&] { return objective(probe, input, labels); };
  auto params = probe.parameters();
  auto analytic = grad.params.parameters();
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto numeric = central_difference(params[k], f, step);
    for (std::size_t i = 0; i < numeric.size(); ++i)
      worst = std::max(worst, relative_error(analytic[k][i], numeric[i]));
  }
  const auto numeric = central_difference(
      std::span<double>(input.data(), static_cast<std::size_t>(input.size())), f, step);
  for (std::size_t i = 0; i < numeric.size(); ++i)
    worst = std::max(worst, relative_error(grad.input.data()[i], numeric[i]));
  return worst;
}

/// Nonzero random biases everywhere, so no ReLU sits exactly on its kink when
/// a whole layer happens to be inactive.
inline void randomize_biases(TreeModel& model, Rng& rng) {
  TreeModel::for_each_block(model, [&](const std::string&, MLPBlock& b) {
    for (AffineLayer& l : b.layers)
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.5, 0.5);
  });
}

/// Random labels for `batch` pairs on a tree with `leaves` leaves.
inline std::vector<PairLabel> random_labels(Rng& rng, std::size_t leaves, std::size_t batch) {
  std::vector<PairLabel> out(batch);
  for (PairLabel& l : out) {
    l.group = static_cast<std::size_t>(rng.below(leaves));
    l.onehot.assign(leaves, 0.0);
    l.onehot[l.group] = 1.0;
    l.sigma = rng.uniform();
  }
  return out;
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace treecheck
