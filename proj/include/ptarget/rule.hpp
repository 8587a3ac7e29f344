#pragma once

// Targeting rules mapping a feature vector to an action in {-1, +1}: axis
// aligned policy trees and linear-score rules.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"

namespace ptarget {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int action = kControl;

  bool is_leaf() const { return feature < 0; }
};

/// Decision tree over named features. Routing: x[feature] <= threshold goes
/// left, otherwise right. Node 0 is the root.
class PolicyTree {
 public:
  PolicyTree() = default;
  PolicyTree(std::vector<std::string> features, std::vector<TreeNode> nodes, int declared_depth)
      : features_(std::move(features)), nodes_(std::move(nodes)), declared_depth_(declared_depth) {
    check();
  }

  /// Depth-0 tree applying `action` to everyone.
  static PolicyTree constant(int action, std::vector<std::string> features) {
    TreeNode leaf;
    leaf.action = action;
    return PolicyTree(std::move(features), {leaf}, 0);
  }

  const std::vector<std::string>& features() const { return features_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int declared_depth() const { return declared_depth_; }

  int depth() const { return depth_from(0); }

  int predict(std::span<const double> x) const {
    if (x.size() != features_.size()) {
      throw ValidationError("feature vector has " + std::to_string(x.size()) + " entries, rule expects " +
                            std::to_string(features_.size()));
    }
    int n = 0;
    while (!nodes_[n].is_leaf()) {
      n = x[nodes_[n].feature] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
    }
    return nodes_[n].action;
  }

  nlohmann::json node_json(int n) const {
    const TreeNode& t = nodes_[n];
    if (t.is_leaf()) {
      return {{"feature", nullptr}, {"threshold", nullptr}, {"left", nullptr}, {"right", nullptr}, {"action", t.action}};
    }
    return {{"feature", features_[t.feature]},
            {"threshold", t.threshold},
            {"left", node_json(t.left)},
            {"right", node_json(t.right)},
            {"action", nullptr}};
  }

  nlohmann::json to_json() const {
    return {{"type", "tree"}, {"depth", declared_depth_}, {"features", features_}, {"root", node_json(0)}};
  }

  static PolicyTree from_json(const nlohmann::json& j) {
    std::vector<std::string> features = j.at("features").get<std::vector<std::string>>();
    std::vector<TreeNode> nodes;
    parse_node(j.at("root"), features, nodes);
    return PolicyTree(std::move(features), std::move(nodes), j.value("depth", 0));
  }

 private:
  static int parse_node(const nlohmann::json& j, const std::vector<std::string>& features,
                        std::vector<TreeNode>& nodes) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (j.at("feature").is_null()) {
      const int a = j.at("action").get<int>();
      if (a != kTreat && a != kControl) throw ValidationError("tree leaf action must be -1 or 1");
      nodes[id].action = a;
      return id;
    }
    const auto name = j.at("feature").get<std::string>();
    auto it = std::find(features.begin(), features.end(), name);
    if (it == features.end()) throw ValidationError("tree references unknown feature '" + name + "'");
    nodes[id].feature = static_cast<int>(it - features.begin());
    nodes[id].threshold = j.at("threshold").get<double>();
    const int l = parse_node(j.at("left"), features, nodes);
    const int r = parse_node(j.at("right"), features, nodes);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  int depth_from(int n) const {
    if (nodes_[n].is_leaf()) return 0;
    return 1 + std::max(depth_from(nodes_[n].left), depth_from(nodes_[n].right));
  }

  void check() const {
    if (nodes_.empty()) throw ValidationError("policy tree has no nodes");
    for (const auto& n : nodes_) {
      if (n.is_leaf()) {
        if (n.action != kTreat && n.action != kControl) throw ValidationError("leaf action must be -1 or 1");
      } else {
        if (n.feature >= static_cast<int>(features_.size())) throw ValidationError("split feature out of range");
        if (!std::isfinite(n.threshold)) throw ValidationError("split threshold must be finite");
        if (n.left <= 0 || n.right <= 0 || n.left >= static_cast<int>(nodes_.size()) ||
            n.right >= static_cast<int>(nodes_.size())) {
          throw ValidationError("malformed tree child index");
        }
      }
    }
    if (depth() > declared_depth_) throw ValidationError("tree deeper than its declared depth");
  }

  std::vector<std::string> features_;
  std::vector<TreeNode> nodes_;
  int declared_depth_ = 0;
};

/// One term of a linear rule: feature a alone (b < 0) or the product x_a*x_b,
/// standardized as (term - center) / scale.
struct LinearTerm {
  int a = 0;
  int b = -1;
  double center = 0.0;
  double scale = 1.0;
  double coef = 0.0;

  double raw(std::span<const double> x) const { return b < 0 ? x[a] : x[a] * x[b]; }
};

/// Treat iff intercept + sum coef * standardized term > 0 (predicted
/// probability of the positive class above one half).
class LinearRule {
 public:
  LinearRule() = default;
  LinearRule(std::vector<std::string> features, double intercept, std::vector<LinearTerm> terms)
      : features_(std::move(features)), intercept_(intercept), terms_(std::move(terms)) {}

  const std::vector<std::string>& features() const { return features_; }
  double intercept() const { return intercept_; }
  const std::vector<LinearTerm>& terms() const { return terms_; }

  double score(std::span<const double> x) const {
    if (x.size() != features_.size()) {
      throw ValidationError("feature vector has " + std::to_string(x.size()) + " entries, rule expects " +
                            std::to_string(features_.size()));
    }
    double s = intercept_;
    for (const auto& t : terms_) s += t.coef * (t.raw(x) - t.center) / t.scale;
    return s;
  }

  int predict(std::span<const double> x) const { return score(x) > 0.0 ? kTreat : kControl; }

  std::string term_name(const LinearTerm& t) const {
    if (t.b < 0) return features_[t.a];
    if (t.a == t.b) return features_[t.a] + "^2";
    return features_[t.a] + "*" + features_[t.b];
  }

  nlohmann::json to_json() const {
    nlohmann::json terms = nlohmann::json::array();
    nlohmann::json coefs = nlohmann::json::object();
    for (const auto& t : terms_) {
      terms.push_back({{"name", term_name(t)},
                       {"a", features_[t.a]},
                       {"b", t.b < 0 ? nlohmann::json(nullptr) : nlohmann::json(features_[t.b])},
                       {"center", t.center},
                       {"scale", t.scale},
                       {"coef", t.coef}});
      coefs[term_name(t)] = t.coef;
    }
    return {{"type", "linear"}, {"features", features_}, {"intercept", intercept_}, {"terms", terms},
            {"coefficients", coefs}};
  }

  static LinearRule from_json(const nlohmann::json& j) {
    auto features = j.at("features").get<std::vector<std::string>>();
    auto index = [&](const std::string& n) {
      auto it = std::find(features.begin(), features.end(), n);
      if (it == features.end()) throw ValidationError("linear rule references unknown feature '" + n + "'");
      return static_cast<int>(it - features.begin());
    };
    std::vector<LinearTerm> terms;
    for (const auto& t : j.at("terms")) {
      LinearTerm lt;
      lt.a = index(t.at("a").get<std::string>());
      lt.b = t.at("b").is_null() ? -1 : index(t.at("b").get<std::string>());
      lt.center = t.at("center").get<double>();
      lt.scale = t.at("scale").get<double>();
      lt.coef = t.at("coef").get<double>();
      terms.push_back(lt);
    }
    return LinearRule(std::move(features), j.at("intercept").get<double>(), std::move(terms));
  }

 private:
  std::vector<std::string> features_;
  double intercept_ = 0.0;
  std::vector<LinearTerm> terms_;
};

using Rule = std::variant<PolicyTree, LinearRule>;

inline int predict(const Rule& rule, std::span<const double> x) {
  return std::visit([&](const auto& r) { return r.predict(x); }, rule);
}

inline const std::vector<std::string>& rule_features(const Rule& rule) {
  return std::visit([](const auto& r) -> const std::vector<std::string>& { return r.features(); }, rule);
}

/// Actions for every row of `X`, whose columns must be the rule's features.
inline std::vector<int> predict_all(const Rule& rule, const FeatureMatrix& X) {
  std::vector<int> a(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) a[i] = predict(rule, X.row(i));
  return a;
}

/// Actions for every unit of `data`, matching features by name.
inline std::vector<int> predict_all(const Rule& rule, const Dataset& data) {
  return predict_all(rule, data.features(rule_features(rule)));
}

inline nlohmann::json rule_to_json(const Rule& rule) {
  return std::visit([](const auto& r) { return r.to_json(); }, rule);
}

inline Rule rule_from_json(const nlohmann::json& j) {
  const auto type = j.value("type", std::string("tree"));
  if (type == "tree") return PolicyTree::from_json(j);
  if (type == "linear") return LinearRule::from_json(j);
  throw ValidationError("unknown rule type '" + type + "'");
}

/// Empirical objective (1/2N) sum_i pi(x_i) r_i, summed in index order.
inline double policy_objective(std::span<const int> actions, std::span<const double> rewards) {
  if (actions.size() != rewards.size() || rewards.empty()) {
    throw ValidationError("actions and rewards must be non-empty and aligned");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) s += actions[i] * rewards[i];
  return s / (2.0 * static_cast<double>(rewards.size()));
}

}  // namespace ptarget
