#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "corereg/dataset.hpp"
#include "corereg/error.hpp"

namespace corereg {

enum class PartitionStrategy { quantile, uniform };

inline std::string to_string(PartitionStrategy s) {
  return s == PartitionStrategy::quantile ? "quantile" : "uniform";
}

inline PartitionStrategy partition_strategy_from_string(const std::string& s) {
  if (s == "quantile") return PartitionStrategy::quantile;
  if (s == "uniform") return PartitionStrategy::uniform;
  throw ConfigError("unknown partition strategy '" + s + "'");
}

struct Interval {
  double left = 0.0;
  double right = 0.0;

  double width() const { return right - left; }
  bool operator==(const Interval&) const = default;
};

/// R = 2^d contiguous score-difference groups in ascending order.
///
/// Group membership is left-open and right-closed, (left, right], except the
/// first group which is closed on both ends. Values outside the covered range
/// clamp to the outermost groups.
class GroupPartition {
 public:
  GroupPartition() = default;

  GroupPartition(std::vector<Interval> bounds, PartitionStrategy strategy)
      : bounds_(std::move(bounds)), strategy_(strategy) {
    if (bounds_.size() < 2 || !std::has_single_bit(bounds_.size()))
      throw ConfigError("group count must be a power of two >= 2, got " +
                        std::to_string(bounds_.size()));
    for (std::size_t r = 0; r < bounds_.size(); ++r) {
      if (!(bounds_[r].left <= bounds_[r].right))
        throw ConfigError("group bounds must be nondecreasing");
      if (r > 0 && bounds_[r].left != bounds_[r - 1].right)
        throw ConfigError("group bounds must be contiguous");
    }
  }

  std::size_t size() const { return bounds_.size(); }
  std::span<const Interval> bounds() const { return bounds_; }
  /// Zero-based group access.
  const Interval& operator[](std::size_t r) const { return bounds_[r]; }
  PartitionStrategy strategy() const { return strategy_; }
  double lower() const { return bounds_.front().left; }
  double upper() const { return bounds_.back().right; }

  bool operator==(const GroupPartition&) const = default;

 private:
  std::vector<Interval> bounds_;
  PartitionStrategy strategy_ = PartitionStrategy::quantile;
};

/// Classification and regression targets for one training pair.
struct PairLabel {
  std::vector<double> onehot;
  double sigma = 0.0;
  std::size_t group = 0;  // zero-based

  std::size_t group_count() const { return onehot.size(); }
};

/// Sorted differences s_a - s_b over every ordered pair (a, b), a != b, with
/// b a policy-admissible exemplar for a.
inline std::vector<double> collect_deltas(const Dataset& train,
                                          const ExemplarPolicy& policy) {
  policy.validate();
  std::vector<double> deltas;
  for (const Sample& a : train.samples())
    for (const Sample& b : train.samples())
      if (policy.admits(a, b)) deltas.push_back(a.score - b.score);
  if (deltas.empty())
    throw DataError("fewer than 2 policy-eligible samples for delta collection");
  std::sort(deltas.begin(), deltas.end());
  return deltas;
}

inline void check_group_count(std::size_t groups) {
  if (groups < 2 || !std::has_single_bit(groups))
    throw ConfigError("group count must be a power of two >= 2, got " +
                      std::to_string(groups));
}

/// Equal-frequency bounds: left_r = d[floor((T-1)(r-1)/R)],
/// right_r = d[floor((T-1)r/R)] over the sorted list d.
inline GroupPartition build_quantile(std::span<const double> sorted_deltas,
                                     std::size_t groups) {
  check_group_count(groups);
  const std::size_t t = sorted_deltas.size();
  if (t == 0) throw DataError("cannot partition an empty delta list");
  if (t < 2) throw DataError("quantile partition needs at least 2 deltas");
  if (!std::is_sorted(sorted_deltas.begin(), sorted_deltas.end()))
    throw ConfigError("deltas must be sorted ascending");
  auto at = [&](std::size_t r) { return sorted_deltas[(t - 1) * r / groups]; };
  std::vector<Interval> bounds(groups);
  for (std::size_t r = 0; r < groups; ++r) {
    bounds[r] = {at(r), at(r + 1)};
    if (!(bounds[r].left < bounds[r].right))
      throw DegeneratePartitionError(bounds[r].left, r + 1);
  }
  return GroupPartition(std::move(bounds), PartitionStrategy::quantile);
}

inline GroupPartition build_uniform(double min, double max, std::size_t groups) {
  check_group_count(groups);
  if (!(min < max)) throw ConfigError("uniform partition requires min < max");
  std::vector<Interval> bounds(groups);
  const double width = (max - min) / static_cast<double>(groups);
  for (std::size_t r = 0; r < groups; ++r) {
    bounds[r].left = r == 0 ? min : bounds[r - 1].right;
    bounds[r].right = r + 1 == groups ? max : min + width * static_cast<double>(r + 1);
  }
  return GroupPartition(std::move(bounds), PartitionStrategy::uniform);
}

/// Zero-based group containing `delta`; total by clamping.
inline std::size_t locate(const GroupPartition& p, double delta) {
  const auto bounds = p.bounds();
  // First group whose right edge is >= delta; the last group absorbs the rest.
  auto it = std::lower_bound(bounds.begin(), bounds.end() - 1, delta,
                             [](const Interval& g, double v) { return g.right < v; });
  return static_cast<std::size_t>(it - bounds.begin());
}

inline PairLabel make_label(const GroupPartition& p, double delta) {
  PairLabel label;
  label.group = locate(p, delta);
  label.onehot.assign(p.size(), 0.0);
  label.onehot[label.group] = 1.0;
  const Interval& g = p[label.group];
  if (g.width() > 0.0) {
    label.sigma = std::clamp((delta - g.left) / g.width(), 0.0, 1.0);
  } else {
    label.sigma = 0.5;
  }
  return label;
}

/// Number of `deltas` falling in each group.
inline std::vector<std::size_t> group_counts(const GroupPartition& p,
                                             std::span<const double> deltas) {
  std::vector<std::size_t> counts(p.size(), 0);
  for (double d : deltas) ++counts[locate(p, d)];
  return counts;
}

}  // namespace corereg
