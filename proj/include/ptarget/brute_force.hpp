#pragma once

// Naive enumeration of every tree of depth <= 2. Slow; used as a reference
// for the exact learner.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/rule.hpp"

namespace ptarget {

struct OracleResult {
  double objective = 0.0;
  PolicyTree tree;
};

namespace detail {

/// Candidate thresholds of feature j over the whole sample, with +inf
/// standing for the split that sends everyone left.
inline std::vector<double> oracle_thresholds(const FeatureMatrix& X, std::size_t j) {
  std::vector<double> v(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) v[i] = X(i, j);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> t;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    double m = v[k] / 2 + v[k + 1] / 2;
    if (!(m >= v[k] && m < v[k + 1])) m = v[k];
    t.push_back(m);
  }
  t.push_back(std::numeric_limits<double>::infinity());
  return t;
}

struct OracleStump {
  double value = -std::numeric_limits<double>::infinity();
  int feature = 0;
  double threshold = 0.0;
  int left = kControl, right = kControl;
};

/// Best (feature, threshold, left action, right action) over `members`,
/// child sums recomputed from scratch for every threshold.
inline OracleStump oracle_stump(std::span<const double> r, const FeatureMatrix& X,
                                const std::vector<std::vector<double>>& thresholds,
                                const std::vector<std::size_t>& members) {
  OracleStump best;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    for (double t : thresholds[j]) {
      double sl = 0.0, sr = 0.0;
      for (auto i : members) (X(i, j) <= t ? sl : sr) += r[i];
      for (int al : {kControl, kTreat}) {
        for (int ar : {kControl, kTreat}) {
          const double v = al * sl + ar * sr;
          if (v > best.value) best = {v, static_cast<int>(j), t, al, ar};
        }
      }
    }
  }
  return best;
}

inline void add_stump(const OracleStump& s, std::vector<TreeNode>& nodes) {
  const int id = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (std::isinf(s.threshold)) {
    nodes[id].action = s.left;
    return;
  }
  nodes[id].feature = s.feature;
  nodes[id].threshold = s.threshold;
  nodes[id].left = id + 1;
  nodes.push_back({-1, 0.0, -1, -1, s.left});
  nodes[id].right = id + 2;
  nodes.push_back({-1, 0.0, -1, -1, s.right});
}

}  // namespace detail

/// Global optimum of (1/2N) sum_i pi(x_i) r_i over all trees of depth <= 2
/// (thresholds at sample midpoints). Guarded to N <= 300, p <= 4.
inline OracleResult brute_force_oracle(std::span<const double> rewards, const FeatureMatrix& X, int depth) {
  if (rewards.size() > 300 || X.cols() > 4 || depth > 2 || depth < 1) {
    throw ValidationError("brute-force oracle limited to N <= 300, p <= 4, depth 1..2");
  }
  if (rewards.empty() || rewards.size() != X.rows()) throw ValidationError("oracle inputs empty or misaligned");
  if (X.cols() == 0) throw ValidationError("oracle needs at least one feature");
  std::vector<std::vector<double>> thresholds;
  for (std::size_t j = 0; j < X.cols(); ++j) thresholds.push_back(detail::oracle_thresholds(X, j));
  std::vector<std::size_t> all(X.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  std::vector<TreeNode> nodes;
  if (depth == 1) {
    detail::add_stump(detail::oracle_stump(rewards, X, thresholds, all), nodes);
  } else {
    double best = -std::numeric_limits<double>::infinity();
    int best_j = 0;
    double best_t = 0.0;
    detail::OracleStump best_l, best_r;
    for (std::size_t j = 0; j < X.cols(); ++j) {
      for (double t : thresholds[j]) {
        std::vector<std::size_t> l, r;
        for (auto i : all) (X(i, j) <= t ? l : r).push_back(i);
        const auto sl = detail::oracle_stump(rewards, X, thresholds, l);
        const auto sr = detail::oracle_stump(rewards, X, thresholds, r);
        const double v = (l.empty() ? 0.0 : sl.value) + (r.empty() ? 0.0 : sr.value);
        if (v > best) {
          best = v;
          best_j = static_cast<int>(j);
          best_t = t;
          best_l = sl;
          best_r = sr;
        }
      }
    }
    if (std::isinf(best_t)) {
      detail::add_stump(best_l, nodes);
    } else {
      nodes.push_back({best_j, best_t, -1, -1, kControl});
      nodes[0].left = 1;
      detail::add_stump(best_l, nodes);
      nodes[0].right = static_cast<int>(nodes.size());
      detail::add_stump(best_r, nodes);
    }
  }
  OracleResult out{0.0, PolicyTree(X.names(), std::move(nodes), depth)};
  std::vector<int> a(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) a[i] = out.tree.predict(X.row(i));
  out.objective = policy_objective(a, rewards);
  return out;
}

}  // namespace ptarget
