#include <gtest/gtest.h>

#include <limits>
#include <set>

#include "test_support.hpp"

using namespace ptarget;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

DgpSpec shifted_spec(double mean) {
  auto s = two_group_spec();
  s.features.push_back(FeatureSpec::normal("x_3", mean, 1.0));
  return s;
}

}  // namespace

TEST(CaliperMatch, IdenticalSamplesMatchAtZeroDistance) {
  const auto a = generate(shifted_spec(0.0), 300, 1).data;
  // Identical samples make the membership logit flat: every unit gets 1/2.
  for (double r : {1e-9, 0.1, kInf}) {
    const auto m = caliper_match(a, a, r);
    EXPECT_EQ(m.pairs.size(), a.size());
    EXPECT_EQ(m.unmatched_a, 0u);
    for (const auto& p : m.pairs) EXPECT_LE(p.distance, 1e-12);
  }
}

TEST(CaliperMatch, InfiniteRadiusKeepsEveryone) {
  const auto a = generate(shifted_spec(0.0), 400, 2).data;
  const auto b = generate(shifted_spec(1.0), 600, 3).data;
  const auto m = caliper_match(a, b, kInf);
  EXPECT_EQ(m.unmatched_a, 0u);
  EXPECT_EQ(m.pairs.size(), 400u);
}

TEST(CaliperMatch, HandDistanceBeyondRadius) {
  const auto m = match_on_scores({0.8}, {0.6, 0.1}, 0.1);
  EXPECT_EQ(m.unmatched_a, 1u);
  EXPECT_TRUE(m.pairs.empty());
  const auto wide = match_on_scores({0.8}, {0.6, 0.1}, 0.25);
  ASSERT_EQ(wide.pairs.size(), 1u);
  EXPECT_EQ(wide.pairs[0].b, 0u);
  EXPECT_NEAR(wide.pairs[0].distance, 0.2, 1e-15);
}

TEST(CaliperMatch, TiesGoToLowerBIndexWithReplacement) {
  const auto m = match_on_scores({0.5, 0.5, 0.31}, {0.7, 0.3, 0.3, 0.7}, kInf);
  ASSERT_EQ(m.pairs.size(), 3u);
  EXPECT_EQ(m.pairs[0].b, 0u);  // 0.3 and 0.7 equally far: lowest index overall
  EXPECT_EQ(m.pairs[1].b, 0u);
  EXPECT_EQ(m.pairs[2].b, 1u);
  EXPECT_EQ(m.unique_b(), (std::vector<std::size_t>{0, 1}));
}

TEST(CaliperMatch, InvariantsAndMonotoneRestriction) {
  Engine eng = make_engine(4, 0);
  std::vector<double> sa, sb;
  for (int i = 0; i < 200; ++i) sa.push_back(uniform01(eng));
  for (int i = 0; i < 150; ++i) sb.push_back(uniform01(eng) * 0.6);
  const auto full = match_on_scores(sa, sb, kInf);
  std::size_t last = 0;
  for (double r : {0.001, 0.01, 0.05, 0.1, 0.25, 1.0}) {
    const auto m = full.restrict(r);
    std::set<std::size_t> seen;
    for (const auto& p : m.pairs) {
      EXPECT_LE(p.distance, r);
      EXPECT_TRUE(seen.insert(p.a).second);
    }
    EXPECT_GE(m.pairs.size(), last);
    EXPECT_EQ(m.pairs.size() + m.unmatched_a, sa.size());
    last = m.pairs.size();
    const auto direct = match_on_scores(sa, sb, r);
    EXPECT_EQ(direct.pairs.size(), m.pairs.size());
  }
  EXPECT_THROW(match_on_scores(sa, sb, 0.0), ValidationError);
}

TEST(CaliperMatch, SeparableSamplesAreNumericalError) {
  const auto a = testing_support::build({1, -1, 1}, {0, 0, 0}, {}, {{0.0}, {0.1}, {0.2}});
  const auto b = testing_support::build({1, -1, 1}, {0, 0, 0}, {}, {{5.0}, {5.1}, {5.2}});
  EXPECT_THROW(caliper_match(a, b, 0.1), NumericalError);
}

TEST(CaliperMatch, MissingFeatureListed) {
  const auto a = generate(shifted_spec(0.0), 50, 1).data;
  const auto b = generate(two_group_spec(), 50, 2).data;
  try {
    caliper_match(a, b, 0.1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("x_3"), std::string::npos);
  }
}

TEST(StandardizedDifference, Examples) {
  EXPECT_NEAR(standardized_difference(std::vector<double>{0, 2}, std::vector<double>{-1, 1}), 100.0 / std::sqrt(2.0),
              1e-12);
  EXPECT_EQ(standardized_difference(std::vector<double>{3, 1, 2}, std::vector<double>{1, 2, 3}), 0.0);
  EXPECT_EQ(standardized_difference(std::vector<double>{0, 1}, std::vector<double>{1, 0, 1, 0}), 0.0);
  EXPECT_TRUE(std::isinf(standardized_difference(std::vector<double>{2, 2}, std::vector<double>{3, 3})));
}

TEST(StandardizedDifference, UnitVarianceHundred) {
  // Large symmetric samples with sd exactly 1 (n-1 denominator) and means 1, 0.
  std::vector<double> a, b;
  const double h = std::sqrt(99.0 / 100.0);
  for (int i = 0; i < 50; ++i) {
    a.push_back(1 + h);
    a.push_back(1 - h);
    b.push_back(h);
    b.push_back(-h);
  }
  EXPECT_NEAR(standardized_difference(a, b), 100.0, 1e-9);
}

TEST(StandardizedDifference, BinaryUsesShareVariance) {
  const std::vector<double> a{1, 1, 1, 0}, b{1, 0, 0, 0};
  const double pa = 0.75, pb = 0.25;
  EXPECT_NEAR(standardized_difference(a, b), 100 * 0.5 / std::sqrt((pa * (1 - pa) + pb * (1 - pb)) / 2), 1e-12);
}

TEST(RadiusSweep, InfiniteRadiusEqualsFullTransfer) {
  const auto a = generate(shifted_spec(0.0), 2000, 5).data;
  const auto b = generate(shifted_spec(0.5), 3000, 6).data;
  const PolicyTree rule({"x_1"}, {{0, 0.5, 1, 2, 0}, {-1, 0, -1, -1, -1}, {-1, 0, -1, -1, 1}}, 1);
  const auto sweep = transfer_with_radius_sweep(rule, a, b, {0.05, kInf}, NuisanceSpec{}, "y");
  ASSERT_EQ(sweep.size(), 2u);
  const auto full = transfer_evaluate(rule, b, NuisanceSpec{}, "y");
  ASSERT_TRUE(sweep[1].report);
  EXPECT_EQ(sweep[1].report->to_json().dump(), full.to_json().dump());
  EXPECT_EQ(sweep[1].matched_b, b.size());
}

TEST(RadiusSweep, EmptyMatchedSetFlagged) {
  const auto a = generate(shifted_spec(0.0), 500, 8).data;
  const auto b = generate(shifted_spec(1.5), 500, 9).data;
  const PolicyTree rule = PolicyTree::constant(kTreat, {"x_1"});
  const auto sweep = transfer_with_radius_sweep(rule, a, b, {1e-15, kInf}, NuisanceSpec{}, "y");
  EXPECT_TRUE(sweep[0].empty || sweep[0].matched_b > 0);
  std::ostringstream out;
  write_sweep_csv(out, sweep);
  EXPECT_NE(out.str().find("radius,matched_a,matched_b,empty"), std::string::npos);
  EXPECT_NE(out.str().find("\ninf,"), std::string::npos);
}

TEST(RadiusSweep, MatchingRestoresRespondersAndBalance) {
  // In A the responders (x_1 = 1) have high x_3; B is mostly low x_3 units
  // drawn from a population where x_3 carries no responders.
  auto spec_a = two_group_spec();
  spec_a.features = {FeatureSpec::bernoulli("x_1", 0.5), FeatureSpec::uniform("x_2", 0, 1),
                     FeatureSpec::normal("x_3", 1.0, 1.0)};
  auto spec_b = spec_a;
  spec_b.features[2] = FeatureSpec::normal("x_3", 0.0, 1.0);
  const auto a = generate(spec_a, 20000, 10).data;
  const auto b = generate(spec_b, 20000, 11).data;
  const auto full = caliper_match(a, b, kInf);
  const auto m = full.restrict(0.1);
  std::vector<double> xa, xb, fa, fb;
  for (const auto& p : m.pairs) {
    xa.push_back(a[p.a].x[2]);
    xb.push_back(b[p.b].x[2]);
  }
  for (const auto& u : a.units()) fa.push_back(u.x[2]);
  for (const auto& u : b.units()) fb.push_back(u.x[2]);
  EXPECT_LT(standardized_difference(xa, xb), standardized_difference(fa, fb));
}
