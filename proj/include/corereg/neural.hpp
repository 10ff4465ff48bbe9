#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "corereg/error.hpp"
#include "corereg/random.hpp"

namespace corereg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { identity, relu, sigmoid, tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

inline double sigmoid(double z) {
  // Split on sign so exp never overflows.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

inline void apply_activation(Activation a, Matrix& m) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: m = m.cwiseMax(0.0); break;
    case Activation::sigmoid: m = m.unaryExpr([](double z) { return sigmoid(z); }); break;
    case Activation::tanh: m = m.array().tanh().matrix(); break;
  }
}

/// Gradient w.r.t. the pre-activation, written in terms of the output `y`.
inline Matrix activation_backward(Activation a, const Matrix& y, const Matrix& dy) {
  switch (a) {
    case Activation::identity: return dy;
    case Activation::relu: return (y.array() > 0.0).select(dy, 0.0);
    case Activation::sigmoid: return (dy.array() * y.array() * (1.0 - y.array())).matrix();
    case Activation::tanh: return (dy.array() * (1.0 - y.array().square())).matrix();
  }
  return dy;
}

}  // namespace detail

struct AffineLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// A chain of affine layers, each followed by its activation.
struct MLPBlock {
  std::vector<AffineLayer> layers;
  std::vector<Activation> activations;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  void validate() const {
    if (layers.empty()) throw ConfigError("MLP block has no layers");
    if (layers.size() != activations.size())
      throw ConfigError("MLP block needs one activation per layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.size() != layers[i].out_dim())
        throw DimensionError(layers[i].out_dim(), layers[i].bias.size(),
                             "bias of layer " + std::to_string(i));
      if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim())
        throw DimensionError(layers[i - 1].out_dim(), layers[i].in_dim(),
                             "input of layer " + std::to_string(i));
    }
  }

  /// Same shapes and activations with every parameter zero.
  MLPBlock zeros_like() const {
    MLPBlock z;
    z.activations = activations;
    for (const AffineLayer& l : layers)
      z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                          Vector::Zero(l.bias.size())});
    return z;
  }

  void set_zero() {
    for (AffineLayer& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }

  /// Views of every parameter array: weight then bias for each layer.
  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    for (AffineLayer& l : layers) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const AffineLayer& l : layers)
      n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
};

/// Builds a block with layer widths `dims` (dims.size() - 1 layers) and
/// He-style uniform fan-in initialization; biases start at zero.
inline MLPBlock make_block(std::span<const Eigen::Index> dims,
                           std::span<const Activation> activations, Rng& rng) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1)
    throw ConfigError("make_block needs n+1 widths for n activations");
  MLPBlock b;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw ConfigError("layer widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[i]));
    AffineLayer l{Matrix(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1])};
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        l.weight(r, c) = rng.uniform(-limit, limit);
    b.layers.push_back(std::move(l));
    b.activations.push_back(activations[i]);
  }
  return b;
}

inline MLPBlock make_block(std::initializer_list<Eigen::Index> dims,
                           std::initializer_list<Activation> activations, Rng& rng) {
  return make_block(std::span<const Eigen::Index>(dims.begin(), dims.size()),
                    std::span<const Activation>(activations.begin(), activations.size()),
                    rng);
}

/// Intermediates cached by `forward`. Columns are batch entries.
struct Tape {
  const MLPBlock* block = nullptr;
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> outputs;  // post-activation output of each layer

  const Matrix& output() const { return outputs.back(); }
};

inline Tape forward(const MLPBlock& block, const Matrix& x) {
  if (x.rows() != block.in_dim())
    throw DimensionError(block.in_dim(), x.rows(), "MLP block input");
  Tape tape;
  tape.block = &block;
  tape.inputs.reserve(block.layers.size());
  tape.outputs.reserve(block.layers.size());
  const Matrix* current = &x;
  for (std::size_t i = 0; i < block.layers.size(); ++i) {
    const AffineLayer& l = block.layers[i];
    tape.inputs.push_back(*current);
    Matrix y = l.weight * *current;
    y.colwise() += l.bias;
    detail::apply_activation(block.activations[i], y);
    tape.outputs.push_back(std::move(y));
    current = &tape.outputs.back();
  }
  return tape;
}

inline Vector forward(const MLPBlock& block, const Vector& x, Tape* tape_out = nullptr) {
  Tape t = forward(block, Matrix(x));
  Vector y = t.output().col(0);
  if (tape_out) *tape_out = std::move(t);
  return y;
}

/// Accumulates parameter gradients into `grad` (same shapes as `block`) and
/// returns the gradient w.r.t. the block input.
inline Matrix backward(const MLPBlock& block, const Tape& tape, const Matrix& dy,
                       MLPBlock& grad) {
  if (tape.block != &block || tape.outputs.size() != block.layers.size())
    throw ConfigError("tape does not belong to this block");
  if (dy.rows() != block.out_dim() || dy.cols() != tape.output().cols())
    throw DimensionError(block.out_dim(), dy.rows(), "upstream gradient");
  if (grad.layers.size() != block.layers.size())
    throw ConfigError("gradient block shape does not match");
  Matrix delta = dy;
  for (std::size_t i = block.layers.size(); i-- > 0;) {
    delta = detail::activation_backward(block.activations[i], tape.outputs[i], delta);
    grad.layers[i].weight.noalias() += delta * tape.inputs[i].transpose();
    grad.layers[i].bias += delta.rowwise().sum();
    delta = block.layers[i].weight.transpose() * delta;
  }
  return delta;
}

struct BlockGradient {
  Matrix input;
  MLPBlock params;
};

inline BlockGradient backward(const MLPBlock& block, const Tape& tape, const Matrix& dy) {
  BlockGradient g{Matrix(), block.zeros_like()};
  g.input = backward(block, tape, dy, g.params);
  return g;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// turning rounding noise into huge relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences of `f` w.r.t. every entry of `x`, perturbing in place.
inline std::vector<double> central_difference(std::span<double> x,
                                              const std::function<double()>& f,
                                              double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Scalar loss of the block output: returns the value and dL/dy.
using OutputLoss = std::function<std::pair<double, Matrix>(const Matrix&)>;

/// Largest relative error between analytic and central-difference gradients
/// over every parameter and every input entry.
inline double grad_check(const MLPBlock& block, const OutputLoss& loss, const Matrix& x,
                         double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  MLPBlock probe = block;
  Matrix input = x;
  const Tape tape = forward(probe, input);
  const auto [value, dy] = loss(tape.output());
  (void)value;
  const BlockGradient analytic = backward(probe, tape, dy);

  auto objective = [&] { return loss(forward(probe, input).output()).first; };
  double worst = 0.0;
  auto params = probe.parameters();
  MLPBlock analytic_params = analytic.params;
  auto grads = analytic_params.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto numeric = central_difference(params[k], objective, step);
    for (std::size_t i = 0; i < numeric.size(); ++i)
      worst = std::max(worst, relative_error(grads[k][i], numeric[i]));
  }
  const auto numeric = central_difference(
      std::span<double>(input.data(), static_cast<std::size_t>(input.size())), objective, step);
  for (std::size_t i = 0; i < numeric.size(); ++i)
    worst = std::max(worst, relative_error(analytic.input.data()[i], numeric[i]));
  return worst;
}

inline double grad_check(const MLPBlock& block, const OutputLoss& loss, const Vector& x,
                         double step) {
  return grad_check(block, loss, Matrix(x), step);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Vector> m;
  std::vector<Vector> v;
};

/// Bias-corrected Adam without weight decay. Moments are allocated on the
/// first call and must keep the same shapes afterwards.
inline void adam_step(AdamState& state, std::span<const std::span<double>> params,
                      std::span<const std::span<double>> grads) {
  if (params.size() != grads.size())
    throw ConfigError("adam: parameter and gradient lists differ in length");
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size())));
      state.v.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size())));
    }
  }
  if (state.m.size() != params.size())
    throw ConfigError("adam: state tracks a different parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() ||
        static_cast<std::size_t>(state.m[k].size()) != params[k].size())
      throw DimensionError(params[k].size(), grads[k].size(), "adam parameter " + std::to_string(k));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::Map<Vector> p(params[k].data(), static_cast<Eigen::Index>(params[k].size()));
    Eigen::Map<const Vector> g(grads[k].data(), static_cast<Eigen::Index>(grads[k].size()));
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g.cwiseAbs2();
    p.array() -= state.lr * (state.m[k].array() / c1) /
                 ((state.v[k].array() / c2).sqrt() + state.eps);
  }
}

}  // namespace corereg
