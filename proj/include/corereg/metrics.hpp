#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "corereg/error.hpp"

namespace corereg {

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("correlation inputs differ in length");
  if (x.size() < 2) throw ConfigError("correlation needs at least 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ConfigError("spearman inputs differ in length");
  if (pred.size() < 2) throw ConfigError("spearman needs at least 2 samples");
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return pearson(rp, rt);
}

inline constexpr double kFisherClamp = 1.0 - 1e-7;

/// tanh of the mean Fisher z-value.
inline double fisher_avg(std::span<const double> rhos) {
  if (rhos.empty()) throw ConfigError("fisher_avg of an empty list");
  double z = 0.0;
  for (double r : rhos) z += std::atanh(std::clamp(r, -kFisherClamp, kFisherClamp));
  return std::tanh(z / static_cast<double>(rhos.size()));
}

/// Relative L2 distance with tolerance theta; theta = 0 gives the plain form.
/// Returned unscaled (reports multiply by 100).
inline double r_l2(std::span<const double> pred, std::span<const double> truth,
                   double s_max, double s_min, double theta = 0.0) {
  if (!(s_max > s_min)) throw NumericError("r_l2 requires s_max > s_min");
  if (pred.size() != truth.size()) throw ConfigError("r_l2 inputs differ in length");
  if (pred.empty()) throw ConfigError("r_l2 needs at least one sample");
  if (!(theta >= 0.0)) throw ConfigError("r_l2 tolerance must be nonnegative");
  const double range = s_max - s_min;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double e = std::max(std::abs(truth[k] - pred[k]) - theta, 0.0) / range;
    sum += e * e;
  }
  return sum / static_cast<double>(pred.size());
}

struct CurvePoint {
  double threshold = 0.0;
  double fraction = 0.0;
};

/// Fraction of samples with |truth - pred| strictly below each threshold.
inline std::vector<CurvePoint> cumulative_curve(std::span<const double> pred,
                                                std::span<const double> truth,
                                                std::span<const double> thresholds) {
  if (pred.size() != truth.size()) throw ConfigError("curve inputs differ in length");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw ConfigError("curve thresholds must be ascending");
  std::vector<double> err(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) err[i] = std::abs(truth[i] - pred[i]);
  std::sort(err.begin(), err.end());
  std::vector<CurvePoint> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto below = std::lower_bound(err.begin(), err.end(), t) - err.begin();
    const double frac = err.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(err.size());
    curve.push_back({t, frac});
  }
  return curve;
}

struct LayerAccuracy {
  std::size_t layer = 0;  // 1-based decision layer
  double accuracy = 0.0;
  bool saturated = false;  // tolerance covers every node of the layer
};

/// Per-layer accuracy of predicted leaves against true leaves (both
/// zero-based). At layer l the node is the depth-l prefix of the leaf path,
/// leaf >> (depth - l); a prediction counts when within `tolerance` nodes of
/// the truth.
inline std::vector<LayerAccuracy> layer_accuracy(std::span<const std::size_t> predicted,
                                                 std::span<const std::size_t> truth,
                                                 std::size_t depth, std::size_t tolerance) {
  if (predicted.size() != truth.size()) throw ConfigError("layer accuracy inputs differ in length");
  if (predicted.empty()) throw ConfigError("layer accuracy needs at least one pair");
  const std::size_t leaves = std::size_t{1} << depth;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] >= leaves || truth[i] >= leaves)
      throw ConfigError("leaf index out of range for depth " + std::to_string(depth));
  std::vector<LayerAccuracy> out;
  for (std::size_t layer = 1; layer <= depth; ++layer) {
    const std::size_t shift = depth - layer;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      const std::size_t a = predicted[i] >> shift;
      const std::size_t b = truth[i] >> shift;
      correct += (a > b ? a - b : b - a) <= tolerance;
    }
    out.push_back({layer, static_cast<double>(correct) / static_cast<double>(predicted.size()),
                   tolerance >= (std::size_t{1} << layer)});
  }
  return out;
}

}  // namespace corereg
