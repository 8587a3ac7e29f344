#include <gtest/gtest.h>

#include <bit>
#include <functional>
#include <map>

#include "test_support.hpp"

using namespace ptarget;
using testing_support::Instance;

namespace {

FeatureMatrix column(const std::vector<double>& x) {
  FeatureMatrix X(x.size(), {"x_1"});
  for (std::size_t i = 0; i < x.size(); ++i) X(i, 0) = x[i];
  return X;
}

PolicyTree tree_of(const LearnedRule& l) { return std::get<PolicyTree>(l.rule); }

std::vector<int> actions(const LearnedRule& l, const FeatureMatrix& X) { return predict_all(l.rule, X); }

/// Best sum over all trees of depth <= d by plain recursion over global
/// midpoints; independent of the learner code.
double naive_best(const std::vector<double>& r, const FeatureMatrix& X, const std::vector<std::size_t>& set, int d,
                  const std::vector<std::vector<double>>& cuts) {
  double total = 0;
  for (auto i : set) total += r[i];
  double best = std::abs(total);
  if (d == 0 || set.size() < 2) return best;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    for (double t : cuts[j]) {
      std::vector<std::size_t> l, rr;
      for (auto i : set) (X(i, j) <= t ? l : rr).push_back(i);
      if (l.empty() || rr.empty()) continue;
      best = std::max(best, naive_best(r, X, l, d - 1, cuts) + naive_best(r, X, rr, d - 1, cuts));
    }
  }
  return best;
}

double naive_objective(const Instance& inst, int depth) {
  std::vector<std::vector<double>> cuts(inst.X.cols());
  for (std::size_t j = 0; j < inst.X.cols(); ++j) {
    std::vector<double> v;
    for (std::size_t i = 0; i < inst.X.rows(); ++i) v.push_back(inst.X(i, j));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) cuts[j].push_back((v[k] + v[k + 1]) / 2);
  }
  std::vector<std::size_t> all(inst.r.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return naive_best(inst.r, inst.X, all, depth, cuts) / (2.0 * static_cast<double>(inst.r.size()));
}

double best_constant(const std::vector<double>& r) {
  double s = 0;
  for (double v : r) s += v;
  return std::abs(s) / (2.0 * static_cast<double>(r.size()));
}

}  // namespace

TEST(ExactTree, AllPositiveTreatsEveryone) {
  const std::vector<double> r{1, 2, 0.5, 3};
  const auto X = column({4, 3, 2, 1});
  const auto l = learn_exact_tree(r, X, 2);
  for (int a : actions(l, X)) EXPECT_EQ(a, kTreat);
  EXPECT_DOUBLE_EQ(l.report.objective, 6.5 / 8);
}

TEST(ExactTree, AllNegativeTreatsNoOne) {
  const std::vector<double> r{-1, -2, -0.5};
  const auto X = column({1, 2, 3});
  const auto l = learn_exact_tree(r, X, 1);
  for (int a : actions(l, X)) EXPECT_EQ(a, kControl);
  EXPECT_DOUBLE_EQ(l.report.objective, 3.5 / 6);
}

TEST(ExactTree, FourPointStump) {
  const auto X = column({1, 2, 3, 4});
  const auto l = learn_exact_tree(std::vector<double>{2, 2, -2, -2}, X, 1);
  const auto& t = tree_of(l);
  ASSERT_FALSE(t.nodes()[0].is_leaf());
  EXPECT_EQ(t.nodes()[0].threshold, 2.5);
  EXPECT_EQ(t.nodes()[t.nodes()[0].left].action, kTreat);
  EXPECT_EQ(t.nodes()[t.nodes()[0].right].action, kControl);
  EXPECT_DOUBLE_EQ(l.report.objective, 1.0);
}

TEST(ExactTree, ZeroRewardsGiveSingleNoTreatLeaf) {
  const auto X = column({1, 2, 3});
  for (int d = 1; d <= 3; ++d) {
    const auto& t = tree_of(learn_exact_tree(std::vector<double>{0, 0, 0}, X, d));
    ASSERT_EQ(t.nodes().size(), 1u);
    EXPECT_EQ(t.nodes()[0].action, kControl);
  }
  const auto& g = tree_of(learn_greedy_tree(std::vector<double>{0, 0, 0}, X, 2, 1));
  ASSERT_EQ(g.nodes().size(), 1u);
  EXPECT_EQ(g.nodes()[0].action, kControl);
}

TEST(ExactTree, DepthBoundAndEmptyInput) {
  const auto X = column({1, 2});
  try {
    learn_exact_tree(std::vector<double>{1, 2}, X, 4);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("exact search depth ≤ 3"), std::string::npos);
  }
  EXPECT_THROW(learn_exact_tree(std::vector<double>{}, FeatureMatrix(0, {"x_1"}), 1), ValidationError);
  EXPECT_THROW(learn_exact_tree(std::vector<double>{1, NAN}, X, 1), ValidationError);
}

TEST(ExactTree, TieBreakPrefersLowerFeatureAndThreshold) {
  // Both features separate the rewards identically.
  FeatureMatrix X(4, {"x_1", "x_2"});
  const double a[] = {1, 2, 3, 4}, b[] = {10, 20, 30, 40};
  for (int i = 0; i < 4; ++i) {
    X(i, 0) = a[i];
    X(i, 1) = b[i];
  }
  const auto lt = learn_exact_tree(std::vector<double>{1, 1, -1, -1}, X, 1);
  EXPECT_EQ(tree_of(lt).nodes()[0].feature, 0);
  // Two equally good cuts on one feature: the zero-reward unit sits between.
  const auto lu = learn_exact_tree(std::vector<double>{1, 0, -1}, column({1, 2, 3}), 1);
  EXPECT_EQ(tree_of(lu).nodes()[0].threshold, 1.5);
}

TEST(ExactTree, MatchesOracleOnRandomInstances) {
  Engine eng = make_engine(2024, 0);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t n = 1 + uniform_below(eng, 60), p = 1 + uniform_below(eng, 3);
    const auto inst = testing_support::random_instance(eng, n, p);
    for (int depth : {1, 2}) {
      const auto oracle = brute_force_oracle(inst.r, inst.X, depth);
      const auto exact = learn_exact_tree(inst.r, inst.X, depth);
      EXPECT_EQ(exact.report.objective, oracle.objective) << "rep " << rep << " depth " << depth;
    }
  }
}

TEST(ExactTree, DepthThreeMatchesNaiveRecursion) {
  Engine eng = make_engine(77, 0);
  for (int rep = 0; rep < 15; ++rep) {
    const auto inst = testing_support::random_instance(eng, 6 + uniform_below(eng, 10), 2);
    const auto exact = learn_exact_tree(inst.r, inst.X, 3);
    EXPECT_NEAR(exact.report.objective, naive_objective(inst, 3), 1e-12);
    EXPECT_NEAR(learn_exact_tree(inst.r, inst.X, 2).report.objective, naive_objective(inst, 2), 1e-12);
  }
}

TEST(ExactTree, ReportObjectiveIsReEvaluation) {
  Engine eng = make_engine(5, 5);
  const auto inst = testing_support::random_instance(eng, 80, 3);
  for (int d = 1; d <= 3; ++d) {
    const auto l = learn_exact_tree(inst.r, inst.X, d);
    EXPECT_EQ(l.report.objective, policy_objective(actions(l, inst.X), inst.r));
    EXPECT_GT(l.report.candidate_splits, 0u);
    EXPECT_LE(tree_of(l).depth(), d);
  }
}

TEST(ExactTree, ThreadCountInvariant) {
  Engine eng = make_engine(6, 0);
  const auto inst = testing_support::random_instance(eng, 150, 3);
  for (int d = 1; d <= 3; ++d) {
    const auto a = learn_exact_tree(inst.r, inst.X, d, 1);
    const auto b = learn_exact_tree(inst.r, inst.X, d, 4);
    EXPECT_EQ(rule_to_json(a.rule).dump(), rule_to_json(b.rule).dump());
  }
}

TEST(ExactTree, ScaleInvariantAssignments) {
  Engine eng = make_engine(9, 0);
  for (int rep = 0; rep < 20; ++rep) {
    auto inst = testing_support::random_instance(eng, 50, 2);
    const auto base = learn_exact_tree(inst.r, inst.X, 2);
    const double lambda = 0.01 + 100 * uniform01(eng);
    std::vector<double> scaled;
    for (double v : inst.r) scaled.push_back(v * lambda);
    const auto s = learn_exact_tree(scaled, inst.X, 2);
    EXPECT_EQ(actions(base, inst.X), actions(s, inst.X));
    EXPECT_NEAR(s.report.objective, lambda * base.report.objective, 1e-9 * lambda);
  }
}

TEST(ExactTree, ConstantShiftChangesDecisions) {
  const auto X = column({1, 1});
  const auto a = learn_exact_tree(std::vector<double>{1, -2}, X, 1);
  const auto b = learn_exact_tree(std::vector<double>{3, 0}, X, 1);
  EXPECT_EQ(actions(a, X), (std::vector<int>{-1, -1}));
  EXPECT_EQ(actions(b, X), (std::vector<int>{1, 1}));
}

TEST(GreedyTree, EqualsExactAtDepthOneWithUnitLeaves) {
  Engine eng = make_engine(10, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const auto inst = testing_support::random_instance(eng, 2 + uniform_below(eng, 80), 3);
    const auto g = learn_greedy_tree(inst.r, inst.X, 1, 1);
    const auto e = learn_exact_tree(inst.r, inst.X, 1);
    EXPECT_EQ(rule_to_json(g.rule).dump(), rule_to_json(e.rule).dump());
  }
}

TEST(GreedyTree, OrderingAgainstExactAndConstant) {
  Engine eng = make_engine(11, 0);
  for (int rep = 0; rep < 40; ++rep) {
    const auto inst = testing_support::random_instance(eng, 20 + uniform_below(eng, 100), 3);
    for (int d = 1; d <= 3; ++d) {
      for (std::size_t leaf : {1u, 10u}) {
        const double g = learn_greedy_tree(inst.r, inst.X, d, leaf).report.objective;
        const double e = learn_exact_tree(inst.r, inst.X, d).report.objective;
        EXPECT_GE(e, g - 1e-12);
        EXPECT_GE(g, best_constant(inst.r) - 1e-12);
      }
    }
  }
}

TEST(GreedyTree, XorInstanceSeparatesLearners) {
  const auto inst = testing_support::xor_instance();
  const double e = learn_exact_tree(inst.r, inst.X, 2).report.objective;
  const double g = learn_greedy_tree(inst.r, inst.X, 2, 1).report.objective;
  EXPECT_DOUBLE_EQ(e, 1.0);
  EXPECT_LT(g, e);
}

TEST(GreedyTree, MinLeafRespected) {
  Engine eng = make_engine(12, 0);
  const auto inst = testing_support::random_instance(eng, 100, 2);
  const auto l = learn_greedy_tree(inst.r, inst.X, 3, 15);
  std::map<std::vector<int>, int> leaf_sizes;
  const auto& t = tree_of(l);
  for (std::size_t i = 0; i < inst.r.size(); ++i) {
    int n = 0;
    std::vector<int> path;
    while (!t.nodes()[n].is_leaf()) {
      n = inst.X(i, t.nodes()[n].feature) <= t.nodes()[n].threshold ? t.nodes()[n].left : t.nodes()[n].right;
      path.push_back(n);
    }
    ++leaf_sizes[path];
  }
  for (const auto& [p, c] : leaf_sizes) EXPECT_GE(c, 15);
}

TEST(GreedyTree, CrossValidatedDepthInRange) {
  Engine eng = make_engine(13, 0);
  const auto inst = testing_support::random_instance(eng, 200, 2);
  const auto l = learn_greedy_tree_cv(inst.r, inst.X, 3);
  EXPECT_GE(l.report.selected_depth, 1);
  EXPECT_LE(l.report.selected_depth, 6);
  EXPECT_EQ(rule_to_json(l.rule).dump(), rule_to_json(learn_greedy_tree_cv(inst.r, inst.X, 3).rule).dump());
}

TEST(WeightedLogit, SingleSignGivesConstantRule) {
  const auto X = column({1, 2, 3});
  const auto l = learn_weighted_logit(std::vector<double>{1, 2, 3}, X, LogitSpec::baseline);
  EXPECT_EQ(actions(l, X), (std::vector<int>{1, 1, 1}));
}

TEST(WeightedLogit, SeparableSignsClassifiedPerfectly) {
  const auto X = column({1, 2, 3, 4, 5, 6});
  const std::vector<double> r{-1, -1, -1, 1, 1, 1};
  const auto l = learn_weighted_logit(r, X, LogitSpec::baseline);
  EXPECT_EQ(actions(l, X), (std::vector<int>{-1, -1, -1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(l.report.objective, 0.5);
  EXPECT_TRUE(l.report.warning);
}

TEST(WeightedLogit, UpweightingAUnitMovesTheBoundary) {
  const auto X = column({1, 2, 3, 4, 5, 6});
  std::vector<double> r{-1, -1, 1, -1, 1, 1};
  EXPECT_EQ(predict(learn_weighted_logit(r, X, LogitSpec::baseline).rule, X.row(3)), kTreat);
  r[3] *= 10;
  EXPECT_EQ(predict(learn_weighted_logit(r, X, LogitSpec::baseline).rule, X.row(3)), kControl);
}

TEST(WeightedLogit, FlexibleSpecCapturesCurvature) {
  Engine eng = make_engine(14, 0);
  FeatureMatrix X(400, {"x_1", "x_2"});
  std::vector<double> r;
  for (std::size_t i = 0; i < 400; ++i) {
    X(i, 0) = 2 * uniform01(eng) - 1;
    X(i, 1) = 2 * uniform01(eng) - 1;
    r.push_back(std::abs(X(i, 0)) > 0.5 ? 1.0 : -1.0);
  }
  const auto base = learn_weighted_logit(r, X, LogitSpec::baseline);
  const auto flex = learn_weighted_logit(r, X, LogitSpec::flexible);
  EXPECT_GT(flex.report.objective, base.report.objective + 0.1);
  const auto j = rule_to_json(flex.rule);
  EXPECT_TRUE(j["coefficients"].contains("x_1^2"));
  EXPECT_TRUE(j["coefficients"].contains("x_1*x_2"));
}

TEST(Oracle, Examples) {
  const auto one = brute_force_oracle(std::vector<double>{5}, column({0}), 1);
  EXPECT_DOUBLE_EQ(one.objective, 2.5);
  EXPECT_EQ(one.tree.predict(std::vector<double>{0}), kTreat);
  EXPECT_DOUBLE_EQ(brute_force_oracle(std::vector<double>{1, -1}, column({0, 1}), 1).objective, 0.5);
  EXPECT_DOUBLE_EQ(brute_force_oracle(std::vector<double>{1, -1}, column({0, 1}), 2).objective, 0.5);
}

TEST(Oracle, SizeGuard) {
  EXPECT_THROW(brute_force_oracle(std::vector<double>(301, 1.0), column(std::vector<double>(301, 0.0)), 1),
               ValidationError);
  EXPECT_THROW(brute_force_oracle(std::vector<double>{1}, column({0}), 3), ValidationError);
  EXPECT_THROW(brute_force_oracle(std::vector<double>{1}, FeatureMatrix(1, {"a", "b", "c", "d", "e"}), 1),
               ValidationError);
}

TEST(Predict, BoundaryAndConstant) {
  const PolicyTree c = PolicyTree::constant(kTreat, {"x_1", "x_2"});
  EXPECT_EQ(c.predict(std::vector<double>{-1e300, 7}), kTreat);
  const PolicyTree t({"x_1", "x_2"}, {{0, 2.5, 1, 2, 0}, {-1, 0, -1, -1, 1}, {-1, 0, -1, -1, -1}}, 1);
  EXPECT_EQ(t.predict(std::vector<double>{2.5, 0}), kTreat);
  EXPECT_EQ(t.predict(std::vector<double>{2.5000001, 0}), kControl);
  EXPECT_THROW(t.predict(std::vector<double>{2.5}), ValidationError);
}

TEST(Predict, MalformedTreesRejected) {
  EXPECT_THROW(PolicyTree({"x_1"}, {{0, NAN, 1, 2, 0}, {-1, 0, -1, -1, 1}, {-1, 0, -1, -1, -1}}, 1), ValidationError);
  EXPECT_THROW(PolicyTree({"x_1"}, {{-1, 0, -1, -1, 0}}, 0), ValidationError);
  EXPECT_THROW(PolicyTree({"x_1"}, {{0, 1, 1, 2, 0}, {-1, 0, -1, -1, 1}, {-1, 0, -1, -1, -1}}, 0), ValidationError);
}

TEST(RuleJson, TreeRoundTripIsBitExact) {
  Engine eng = make_engine(15, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = testing_support::random_instance(eng, 60, 3);
    const auto l = learn_exact_tree(inst.r, inst.X, 2);
    const auto text = rule_to_json(l.rule).dump();
    const Rule back = rule_from_json(nlohmann::json::parse(text));
    const auto ta = tree_of(l);
    const auto& a = ta.nodes();
    const auto& b = std::get<PolicyTree>(back).nodes();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].feature, b[k].feature);
      EXPECT_EQ(std::bit_cast<std::uint64_t>(a[k].threshold), std::bit_cast<std::uint64_t>(b[k].threshold));
      EXPECT_EQ(a[k].action, b[k].action);
    }
    EXPECT_EQ(predict_all(back, inst.X), actions(l, inst.X));
  }
}

TEST(RuleJson, LinearRoundTrip) {
  const auto X = column({1, 2, 3, 4, 5, 6});
  const auto l = learn_weighted_logit(std::vector<double>{-1, -1, 1, -1, 1, 1}, X, LogitSpec::flexible);
  const Rule back = rule_from_json(nlohmann::json::parse(rule_to_json(l.rule).dump()));
  EXPECT_EQ(predict_all(back, X), actions(l, X));
  EXPECT_THROW(rule_from_json(nlohmann::json{{"type", "forest"}}), ValidationError);
}

TEST(LearnerConfig, DispatchAndValidation) {
  const auto X = column({1, 2, 3, 4});
  const std::vector<double> r{2, 2, -2, -2};
  LearnerConfig cfg;
  cfg.kind = LearnerKind::constant;
  cfg.constant_action = kTreat;
  EXPECT_DOUBLE_EQ(learn_rule(r, X, cfg).report.objective, 0.0);
  cfg.kind = parse_learner_kind("exact-tree");
  cfg.depth = 5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_THROW(parse_learner_kind("forest"), ValidationError);
}
