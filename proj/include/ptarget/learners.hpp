#pragma once

// Policy learners maximizing (1/2N) sum_i pi(x_i) r_i over targeting rules:
// exact depth-bounded tree search, greedy top-down trees (fixed or
// cross-validated depth), and weighted logistic classification.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/linalg.hpp"
#include "ptarget/parallel.hpp"
#include "ptarget/rule.hpp"

namespace ptarget {

inline constexpr int kMaxExactDepth = 3;

struct LearnerReport {
  double objective = 0.0;
  std::size_t candidate_splits = 0;
  double elapsed_seconds = 0.0;
  bool warning = false;
  std::string note;
  int selected_depth = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"objective", objective}, {"candidate_splits", candidate_splits}, {"warning", warning}};
    if (!note.empty()) j["note"] = note;
    if (selected_depth > 0) j["selected_depth"] = selected_depth;
    return j;
  }
};

struct LearnedRule {
  Rule rule;
  LearnerReport report;
};

namespace detail {

inline void check_learner_inputs(std::span<const double> rewards, const FeatureMatrix& X) {
  if (rewards.empty()) throw ValidationError("policy learning needs at least one unit");
  if (rewards.size() != X.rows()) throw ValidationError("rewards and features are not aligned");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw ValidationError("rewards must be finite");
  }
}

/// Midpoint of two consecutive distinct values, guaranteed in [a, b).
inline double midpoint(double a, double b) {
  double m = a / 2 + b / 2;
  if (!(m >= a && m < b)) m = a;
  return m;
}

inline int leaf_action(double total) { return total > 0.0 ? kTreat : kControl; }

/// A (sub)tree found by search, with its summed reward sum_i pi_i r_i.
struct Plan {
  double value = 0.0;
  int action = kControl;
  int feature = -1;
  double threshold = 0.0;
  std::vector<Plan> kids;

  static Plan leaf(double total) { return {std::abs(total), leaf_action(total), -1, 0.0, {}}; }
};

inline void flatten(const Plan& p, std::vector<TreeNode>& nodes) {
  const int id = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (p.kids.empty()) {
    nodes[id].action = p.action;
    return;
  }
  nodes[id].feature = p.feature;
  nodes[id].threshold = p.threshold;
  nodes[id].left = static_cast<int>(nodes.size());
  flatten(p.kids[0], nodes);
  nodes[id].right = static_cast<int>(nodes.size());
  flatten(p.kids[1], nodes);
}

/// Max/min prefix sums over group-ordered leaves under point updates.
class PrefixTree {
 public:
  explicit PrefixTree(std::size_t leaves) {
    size_ = 1;
    while (size_ < leaves) size_ <<= 1;
    nodes_.assign(2 * size_, Node{});
  }

  void add(std::size_t leaf, double v) {
    std::size_t i = size_ + leaf;
    nodes_[i].sum += v;
    nodes_[i].max_prefix = nodes_[i].min_prefix = nodes_[i].sum;
    for (i >>= 1; i >= 1; i >>= 1) {
      const Node& a = nodes_[2 * i];
      const Node& b = nodes_[2 * i + 1];
      nodes_[i] = {a.sum + b.sum, std::max(a.max_prefix, a.sum + b.max_prefix),
                   std::min(a.min_prefix, a.sum + b.min_prefix)};
    }
  }

  /// Best depth-1 summed reward for the represented set along this feature:
  /// max over cuts c of |A(c)| + |T - A(c)| = max(|T|, 2 max A - T, T - 2 min A).
  double best_split_value() const {
    const Node& r = nodes_[1];
    return std::max({std::abs(r.sum), 2 * r.max_prefix - r.sum, r.sum - 2 * r.min_prefix});
  }

 private:
  struct Node {
    double sum = 0.0;
    double max_prefix = 0.0;
    double min_prefix = 0.0;
  };
  std::size_t size_ = 1;
  std::vector<Node> nodes_;
};

/// Exhaustive search over axis-aligned trees of bounded depth.
class TreeSearch {
 public:
  TreeSearch(std::span<const double> rewards, const FeatureMatrix& X) : r_(rewards), X_(X) {
    const std::size_t n = X.rows(), p = X.cols();
    order_.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      auto& o = order_[j];
      o.resize(n);
      std::iota(o.begin(), o.end(), 0u);
      std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X(a, j) < X(b, j); });
    }
    double scale = 0.0;
    for (double v : rewards) scale += std::abs(v);
    eps_ = 1e-12 * scale;
  }

  std::size_t candidates() const { return candidates_; }

  std::vector<std::uint32_t> all_units() const {
    std::vector<std::uint32_t> s(X_.rows());
    std::iota(s.begin(), s.end(), 0u);
    return s;
  }

  /// Best tree of depth <= `depth` on the units in `set`.
  Plan best(const std::vector<std::uint32_t>& set, int depth, std::size_t threads = 1) {
    auto sorted = sorted_orders(set);
    return best_sorted(sorted, depth, threads);
  }

  /// Greedy top-down tree: at each node the best single split (both children
  /// holding at least `min_leaf` units) is kept only if it strictly improves
  /// on the leaf.
  Plan greedy(const std::vector<std::uint32_t>& set, int depth, std::size_t min_leaf) {
    auto sorted = sorted_orders(set);
    Plan leaf = Plan::leaf(total(sorted[0]));
    if (depth == 0 || set.size() < 2 * min_leaf) return leaf;
    Plan split = best_depth1(sorted, min_leaf);
    if (split.kids.empty() || !(split.value > leaf.value + eps_)) return leaf;
    const auto [left, right] = partition(sorted[0], split.feature, split.threshold);
    Plan out = split;
    out.kids[0] = greedy(left, depth - 1, min_leaf);
    out.kids[1] = greedy(right, depth - 1, min_leaf);
    out.value = out.kids[0].value + out.kids[1].value;
    return out;
  }

 private:
  using Orders = std::vector<std::vector<std::uint32_t>>;

  Orders sorted_orders(const std::vector<std::uint32_t>& set) const {
    const std::size_t p = X_.cols();
    Orders out(std::max<std::size_t>(p, 1));
    if (p == 0) {
      out[0] = set;
      return out;
    }
    std::vector<std::uint8_t> in(X_.rows(), 0);
    for (auto u : set) in[u] = 1;
    for (std::size_t j = 0; j < p; ++j) {
      out[j].reserve(set.size());
      for (auto u : order_[j]) {
        if (in[u]) out[j].push_back(u);
      }
    }
    return out;
  }

  double total(const std::vector<std::uint32_t>& s) const {
    double t = 0.0;
    for (auto u : s) t += r_[u];
    return t;
  }

  std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> partition(
      const std::vector<std::uint32_t>& s, int feature, double threshold) const {
    std::vector<std::uint32_t> l, r;
    for (auto u : s) (X_(u, feature) <= threshold ? l : r).push_back(u);
    std::sort(l.begin(), l.end());
    std::sort(r.begin(), r.end());
    return {std::move(l), std::move(r)};
  }

  Plan best_sorted(const Orders& sorted, int depth, std::size_t threads) {
    if (depth <= 1 || X_.cols() == 0) {
      return depth <= 0 || X_.cols() == 0 ? Plan::leaf(total(sorted[0])) : best_depth1(sorted, 1);
    }
    if (depth == 2) return best_depth2(sorted, threads);
    return best_deep(sorted, depth, threads);
  }

  /// Best leaf or single split; splits must leave >= min_leaf units per side.
  Plan best_depth1(const Orders& sorted, std::size_t min_leaf) {
    const double t = total(sorted[0]);
    Plan best = Plan::leaf(t);
    const std::size_t m = sorted[0].size();
    for (std::size_t j = 0; j < X_.cols(); ++j) {
      const auto& o = sorted[j];
      double prefix = 0.0;
      for (std::size_t pos = 0; pos + 1 < m; ++pos) {
        prefix += r_[o[pos]];
        const double a = X_(o[pos], j), b = X_(o[pos + 1], j);
        if (!(a < b)) continue;
        if (pos + 1 < min_leaf || m - pos - 1 < min_leaf) continue;
        ++candidates_;
        const double v = std::abs(prefix) + std::abs(t - prefix);
        if (v > best.value + eps_) {
          best = {v, kControl, static_cast<int>(j), midpoint(a, b),
                  {Plan::leaf(prefix), Plan::leaf(t - prefix)}};
        }
      }
    }
    return best;
  }

  struct RootChoice {
    double value = -1.0;
    std::size_t pos = 0;
    bool found = false;
    std::size_t candidates = 0;
  };

  /// Depth-2 search. For each root feature the units move one at a time from
  /// the right child to the left; per-feature prefix trees keep the best
  /// depth-1 value of both children current in O(p log n) per move.
  Plan best_depth2(const Orders& sorted, std::size_t threads) {
    const std::size_t p = X_.cols();
    const std::size_t m = sorted[0].size();
    Plan base = best_depth1(sorted, 1);
    if (m < 2) return base;

    // Group (distinct value rank) of every unit along each feature.
    std::vector<std::vector<std::uint32_t>> group(p, std::vector<std::uint32_t>(X_.rows(), 0));
    std::vector<std::size_t> group_count(p, 0);
    for (std::size_t k = 0; k < p; ++k) {
      const auto& o = sorted[k];
      std::uint32_t g = 0;
      for (std::size_t pos = 0; pos < m; ++pos) {
        if (pos > 0 && X_(o[pos - 1], k) < X_(o[pos], k)) ++g;
        group[k][o[pos]] = g;
      }
      group_count[k] = g + 1;
    }

    std::vector<RootChoice> choice(p);
    parallel_for(p, threads, [&](std::size_t j) {
      std::vector<PrefixTree> left, right;
      for (std::size_t k = 0; k < p; ++k) {
        left.emplace_back(group_count[k]);
        right.emplace_back(group_count[k]);
        for (auto u : sorted[k]) right[k].add(group[k][u], r_[u]);
      }
      RootChoice& c = choice[j];
      double best_value = base.value;
      const auto& o = sorted[j];
      for (std::size_t pos = 0; pos + 1 < m; ++pos) {
        const auto u = o[pos];
        for (std::size_t k = 0; k < p; ++k) {
          left[k].add(group[k][u], r_[u]);
          right[k].add(group[k][u], -r_[u]);
        }
        if (!(X_(u, j) < X_(o[pos + 1], j))) continue;
        ++c.candidates;
        double vl = 0.0, vr = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
          vl = std::max(vl, left[k].best_split_value());
          vr = std::max(vr, right[k].best_split_value());
        }
        if (vl + vr > best_value + eps_) {
          best_value = vl + vr;
          c = {best_value, pos, true, c.candidates};
        }
      }
    });

    double best_value = base.value;
    int best_j = -1;
    for (std::size_t j = 0; j < p; ++j) {
      candidates_ += choice[j].candidates;
      if (choice[j].found && choice[j].value > best_value + eps_) {
        best_value = choice[j].value;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j < 0) return base;
    const auto& o = sorted[best_j];
    const std::size_t pos = choice[best_j].pos;
    const double threshold = midpoint(X_(o[pos], best_j), X_(o[pos + 1], best_j));
    return split_with_children(sorted[0], best_j, threshold, 1);
  }

  /// Depth >= 3: every root cut, with exact depth-1 searches in each child.
  Plan best_deep(const Orders& sorted, int depth, std::size_t threads) {
    const std::size_t p = X_.cols();
    const std::size_t m = sorted[0].size();
    Plan base = best_sorted(sorted, depth - 1, threads);
    if (m < 2) return base;
    std::vector<RootChoice> choice(p);
    std::vector<std::size_t> child_candidates(p, 0);
    parallel_for(p, threads, [&](std::size_t j) {
      TreeSearch local(r_, X_, order_, eps_);
      const auto& o = sorted[j];
      double best_value = base.value;
      RootChoice& c = choice[j];
      for (std::size_t pos = 0; pos + 1 < m; ++pos) {
        if (!(X_(o[pos], j) < X_(o[pos + 1], j))) continue;
        ++c.candidates;
        std::vector<std::uint32_t> l(o.begin(), o.begin() + static_cast<std::ptrdiff_t>(pos) + 1);
        std::vector<std::uint32_t> r(o.begin() + static_cast<std::ptrdiff_t>(pos) + 1, o.end());
        std::sort(l.begin(), l.end());
        std::sort(r.begin(), r.end());
        const double v = local.best(l, depth - 1).value + local.best(r, depth - 1).value;
        if (v > best_value + eps_) {
          best_value = v;
          c = {v, pos, true, c.candidates};
        }
      }
      child_candidates[j] = local.candidates_;
    });
    double best_value = base.value;
    int best_j = -1;
    for (std::size_t j = 0; j < p; ++j) {
      candidates_ += choice[j].candidates + child_candidates[j];
      if (choice[j].found && choice[j].value > best_value + eps_) {
        best_value = choice[j].value;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j < 0) return base;
    const auto& o = sorted[best_j];
    const std::size_t pos = choice[best_j].pos;
    const double threshold = midpoint(X_(o[pos], best_j), X_(o[pos + 1], best_j));
    return split_with_children(sorted[0], best_j, threshold, depth - 1);
  }

  Plan split_with_children(const std::vector<std::uint32_t>& s, int feature, double threshold, int child_depth) {
    const auto [l, r] = partition(s, feature, threshold);
    Plan out;
    out.feature = feature;
    out.threshold = threshold;
    out.kids.push_back(best(l, child_depth));
    out.kids.push_back(best(r, child_depth));
    out.value = out.kids[0].value + out.kids[1].value;
    return out;
  }

  TreeSearch(std::span<const double> r, const FeatureMatrix& X, const std::vector<std::vector<std::uint32_t>>& order,
             double eps)
      : r_(r), X_(X), order_(order), eps_(eps) {}

  std::span<const double> r_;
  const FeatureMatrix& X_;
  std::vector<std::vector<std::uint32_t>> order_;
  double eps_ = 0.0;
  std::size_t candidates_ = 0;
};

inline PolicyTree to_tree(const Plan& plan, const FeatureMatrix& X, int declared_depth) {
  std::vector<TreeNode> nodes;
  flatten(plan, nodes);
  return PolicyTree(X.names(), std::move(nodes), declared_depth);
}

template <typename RuleT>
double training_objective(const RuleT& rule, std::span<const double> rewards, const FeatureMatrix& X) {
  std::vector<int> a(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) a[i] = rule.predict(X.row(i));
  return policy_objective(a, rewards);
}

}  // namespace detail

/// Globally optimal tree of depth <= `depth` (1..3) for the objective
/// (1/2N) sum_i pi(x_i) r_i. Thresholds are midpoints between consecutive
/// distinct feature values; a leaf treats iff its reward sum is positive.
inline LearnedRule learn_exact_tree(std::span<const double> rewards, const FeatureMatrix& X, int depth,
                                    std::size_t threads = 1) {
  if (depth > kMaxExactDepth) throw ValidationError("exact search depth ≤ 3 (requested " + std::to_string(depth) + ")");
  if (depth < 1) throw ValidationError("exact tree depth must be at least 1");
  detail::check_learner_inputs(rewards, X);
  const auto start = std::chrono::steady_clock::now();
  detail::TreeSearch search(rewards, X);
  const detail::Plan plan = search.best(search.all_units(), depth, threads);
  PolicyTree tree = detail::to_tree(plan, X, depth);
  LearnerReport rep;
  rep.objective = detail::training_objective(tree, rewards, X);
  rep.candidate_splits = search.candidates();
  rep.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(tree), rep};
}

/// Greedy top-down tree with a fixed depth limit.
inline LearnedRule learn_greedy_tree(std::span<const double> rewards, const FeatureMatrix& X, int depth,
                                     std::size_t min_leaf = 10) {
  if (depth < 1) throw ValidationError("greedy tree depth must be at least 1");
  if (min_leaf < 1) throw ValidationError("minimum leaf size must be at least 1");
  detail::check_learner_inputs(rewards, X);
  const auto start = std::chrono::steady_clock::now();
  detail::TreeSearch search(rewards, X);
  const detail::Plan plan = search.greedy(search.all_units(), depth, min_leaf);
  PolicyTree tree = detail::to_tree(plan, X, depth);
  LearnerReport rep;
  rep.objective = detail::training_objective(tree, rewards, X);
  rep.candidate_splits = search.candidates();
  rep.selected_depth = depth;
  rep.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(tree), rep};
}

/// Greedy tree whose depth (1..max_depth) maximizes the pooled out-of-fold
/// value (1/2N) sum pi r over `folds` folds; ties go to the shallower depth.
inline LearnedRule learn_greedy_tree_cv(std::span<const double> rewards, const FeatureMatrix& X,
                                        std::uint64_t seed, std::size_t min_leaf = 10, int max_depth = 6,
                                        std::size_t folds = 10) {
  detail::check_learner_inputs(rewards, X);
  const std::size_t n = rewards.size();
  int chosen = 1;
  if (n >= 2) {
    const std::size_t k = std::min(folds, n);
    const auto assignment = split_folds(n, k, seed);
    std::vector<double> score(static_cast<std::size_t>(max_depth) + 1, 0.0);
    for (std::size_t f = 0; f < k; ++f) {
      const auto train = fold_members(assignment, f, false);
      const auto test = fold_members(assignment, f, true);
      const FeatureMatrix Xtr = X.select_rows(train);
      std::vector<double> rtr;
      for (auto i : train) rtr.push_back(rewards[i]);
      for (int d = 1; d <= max_depth; ++d) {
        const auto fit = learn_greedy_tree(rtr, Xtr, d, min_leaf);
        const auto& tree = std::get<PolicyTree>(fit.rule);
        for (auto i : test) score[d] += tree.predict(X.row(i)) * rewards[i];
      }
    }
    double best = score[1];
    for (int d = 2; d <= max_depth; ++d) {
      if (score[d] > best + 1e-12 * std::abs(best)) {
        best = score[d];
        chosen = d;
      }
    }
  }
  LearnedRule out = learn_greedy_tree(rewards, X, chosen, min_leaf);
  out.report.selected_depth = chosen;
  return out;
}

enum class LogitSpec { baseline, flexible };

/// Weighted logistic classification: label 1{r > 0}, weight |r|. The
/// flexible specification adds squares of non-binary features and all
/// pairwise products. Separation or non-convergence falls back to the best
/// constant rule with `warning` set, unless the diverging fit already
/// classifies every weighted unit correctly.
inline LearnedRule learn_weighted_logit(std::span<const double> rewards, const FeatureMatrix& X, LogitSpec spec) {
  detail::check_learner_inputs(rewards, X);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = rewards.size(), p = X.cols();
  double total = 0.0;
  bool any_pos = false, any_neg = false;
  for (double r : rewards) {
    total += r;
    any_pos |= r > 0;
    any_neg |= r < 0;
  }
  auto finish = [&](Rule rule, bool warning, std::string note) {
    LearnerReport rep;
    rep.objective = policy_objective(predict_all(rule, X), rewards);
    rep.warning = warning;
    rep.note = std::move(note);
    rep.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return LearnedRule{std::move(rule), rep};
  };
  const auto constant = [&](int a) { return Rule(PolicyTree::constant(a, X.names())); };
  if (!any_pos || !any_neg) {
    return finish(constant(any_pos ? kTreat : kControl), false, "single reward sign; constant rule");
  }

  std::vector<LinearTerm> terms;
  auto is_binary = [&](std::size_t j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (X(i, j) != 0.0 && X(i, j) != 1.0) return false;
    }
    return true;
  };
  for (std::size_t j = 0; j < p; ++j) terms.push_back({static_cast<int>(j), -1});
  if (spec == LogitSpec::flexible) {
    for (std::size_t j = 0; j < p; ++j) {
      if (!is_binary(j)) terms.push_back({static_cast<int>(j), static_cast<int>(j)});
    }
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a + 1; b < p; ++b) terms.push_back({static_cast<int>(a), static_cast<int>(b)});
    }
  }
  // Standardize; drop constant terms.
  std::vector<LinearTerm> kept;
  for (auto t : terms) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += t.raw(X.row(i));
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) ss += std::pow(t.raw(X.row(i)) - mean, 2);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) continue;
    t.center = mean;
    t.scale = sd;
    kept.push_back(t);
  }
  Eigen::MatrixXd D(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()) + 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n)), w(static_cast<Eigen::Index>(n));
  double wsum = 0.0;
  for (double r : rewards) wsum += std::abs(r);
  std::vector<std::string> names{"(intercept)"};
  for (const auto& t : kept) names.push_back(LinearRule(X.names(), 0, {}).term_name(t));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    D(r, 0) = 1.0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      D(r, static_cast<Eigen::Index>(k) + 1) = (kept[k].raw(X.row(i)) - kept[k].center) / kept[k].scale;
    }
    y[r] = rewards[i] > 0 ? 1.0 : 0.0;
    w[r] = std::abs(rewards[i]) * static_cast<double>(n) / wsum;
  }
  require_full_rank(D, names, "weighted logit learner");
  const LogitFit fit = fit_logit(D, y, w);
  for (std::size_t k = 0; k < kept.size(); ++k) kept[k].coef = fit.coef[static_cast<Eigen::Index>(k) + 1];
  LinearRule rule(X.names(), fit.coef[0], kept);
  if (fit.status == LogitStatus::converged) return finish(rule, false, "");

  bool perfect = true;
  for (std::size_t i = 0; i < n && perfect; ++i) {
    if (rewards[i] != 0.0 && (rule.predict(X.row(i)) == kTreat) != (rewards[i] > 0)) perfect = false;
  }
  if (fit.status == LogitStatus::separated && perfect) {
    return finish(rule, true, "complete separation; rule uses the diverging coefficient direction");
  }
  return finish(constant(detail::leaf_action(total)), true,
                fit.status == LogitStatus::separated ? "quasi-complete separation; constant rule"
                                                     : "logit did not converge; constant rule");
}

// ---------------------------------------------------------------------------

enum class LearnerKind { exact_tree, greedy_tree, greedy_tree_cv, weighted_logit, constant };

struct LearnerConfig {
  LearnerKind kind = LearnerKind::exact_tree;
  int depth = 2;
  std::size_t min_leaf = 10;
  LogitSpec logit_spec = LogitSpec::baseline;
  int constant_action = kTreat;
  std::uint64_t seed = 0;  // greedy-cv inner folds

  void validate() const {
    if (kind == LearnerKind::exact_tree && depth > kMaxExactDepth) {
      throw ValidationError("exact search depth ≤ 3 (requested " + std::to_string(depth) + ")");
    }
    if ((kind == LearnerKind::exact_tree || kind == LearnerKind::greedy_tree) && depth < 1) {
      throw ValidationError("tree depth must be at least 1");
    }
    if (kind == LearnerKind::constant && constant_action != kTreat && constant_action != kControl) {
      throw ValidationError("constant action must be -1 or 1");
    }
    if (min_leaf < 1) throw ValidationError("minimum leaf size must be at least 1");
  }

  nlohmann::json to_json() const {
    static const char* names[] = {"exact-tree", "greedy", "greedy-cv", "weighted-logit", "constant"};
    nlohmann::json j{{"kind", names[static_cast<int>(kind)]}};
    switch (kind) {
      case LearnerKind::exact_tree:
        j["depth"] = depth;
        break;
      case LearnerKind::greedy_tree:
        j["depth"] = depth;
        j["min_leaf"] = min_leaf;
        break;
      case LearnerKind::greedy_tree_cv:
        j["min_leaf"] = min_leaf;
        j["seed"] = seed;
        break;
      case LearnerKind::weighted_logit:
        j["spec"] = logit_spec == LogitSpec::baseline ? "baseline" : "flexible";
        break;
      case LearnerKind::constant:
        j["action"] = constant_action;
        break;
    }
    return j;
  }
};

inline LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "exact-tree" || s == "exact") return LearnerKind::exact_tree;
  if (s == "greedy" || s == "greedy-tree") return LearnerKind::greedy_tree;
  if (s == "greedy-cv") return LearnerKind::greedy_tree_cv;
  if (s == "weighted-logit" || s == "logit") return LearnerKind::weighted_logit;
  if (s == "constant") return LearnerKind::constant;
  throw ValidationError("unknown learner '" + s + "'");
}

inline LearnedRule learn_rule(std::span<const double> rewards, const FeatureMatrix& X, const LearnerConfig& cfg,
                              std::size_t threads = 1) {
  cfg.validate();
  switch (cfg.kind) {
    case LearnerKind::exact_tree:
      return learn_exact_tree(rewards, X, cfg.depth, threads);
    case LearnerKind::greedy_tree:
      return learn_greedy_tree(rewards, X, cfg.depth, cfg.min_leaf);
    case LearnerKind::greedy_tree_cv:
      return learn_greedy_tree_cv(rewards, X, cfg.seed, cfg.min_leaf);
    case LearnerKind::weighted_logit:
      return learn_weighted_logit(rewards, X, cfg.logit_spec);
    case LearnerKind::constant: {
      detail::check_learner_inputs(rewards, X);
      PolicyTree t = PolicyTree::constant(cfg.constant_action, X.names());
      LearnerReport rep;
      rep.objective = detail::training_objective(t, rewards, X);
      return {std::move(t), rep};
    }
  }
  throw ValidationError("unknown learner");
}

}  // namespace ptarget
