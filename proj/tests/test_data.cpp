#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

using namespace ptarget;
using testing_support::parse;

namespace {

bool message_has(const std::exception& e, const std::string& s) {
  return std::string(e.what()).find(s) != std::string::npos;
}

}  // namespace

TEST(CsvLoad, ZeroOneCodingMapsToPlusMinusOne) {
  CsvConfig cfg;
  cfg.coding = TreatmentCoding::zero_one;
  const auto data = parse("id,y,d,x_1\na,1,0,0.5\nb,2,1,0.1\nc,0,1,0.2\nd,3,0,0.3\n", cfg);
  ASSERT_EQ(data.size(), 4u);
  EXPECT_EQ(data.treatments(), (std::vector<int>{-1, 1, 1, -1}));
  EXPECT_EQ(data.schema().features, (std::vector<std::string>{"x_1"}));
}

TEST(CsvLoad, TreatmentOutsideCodingNamesTheRow) {
  CsvConfig cfg;
  cfg.coding = TreatmentCoding::zero_one;
  try {
    parse("id,y,d\na,1,0\nb,2,2\nc,3,1\n", cfg);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_TRUE(message_has(e, "row 2")) << e.what();
  }
}

TEST(CsvLoad, StrataCodedInOrderOfAppearance) {
  const auto data = parse("id,y,d,z_g\n1,1,1,A\n2,2,-1,B\n3,0,1,A\n");
  ASSERT_EQ(data.schema().strata.size(), 1u);
  EXPECT_EQ(data[0].z[0], 0);
  EXPECT_EQ(data[1].z[0], 1);
  EXPECT_EQ(data[2].z[0], 0);
  const auto book = data.schema_json()["strata"][0]["codebook"];
  EXPECT_EQ(book["A"], 0);
  EXPECT_EQ(book["B"], 1);
}

TEST(CsvLoad, MissingColumnIsNamed) {
  try {
    parse("id,y,x_1\n1,1,0\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(message_has(e, "'d'")) << e.what();
  }
}

TEST(CsvLoad, NonFiniteAndGarbageRejected) {
  EXPECT_THROW(parse("id,y,d\n1,nan,1\n2,1,-1\n"), ValidationError);
  EXPECT_THROW(parse("id,y,d\n1,inf,1\n2,1,-1\n"), ValidationError);
  EXPECT_THROW(parse("id,y,d,x_1\n1,1,1,abc\n2,1,-1,0\n"), ValidationError);
  EXPECT_THROW(parse("id,y,d\n1,1,1,9\n"), ValidationError);
}

TEST(CsvLoad, ZeroRowsAndSingleArmRejected) {
  EXPECT_THROW(parse("id,y,d\n"), ValidationError);
  EXPECT_THROW(parse("id,y,d\n1,1,1\n2,3,1\n"), ValidationError);
}

TEST(CsvLoad, CommentsQuotesAndExtras) {
  const auto data = parse("# header comment\nid,y,d,z_g,x_a,y2_any\n\"u,1\",1.5,1,\"A\",2,1\nu2,0,-1,B,3,0\n");
  EXPECT_EQ(data[0].id, "u,1");
  EXPECT_EQ(data.schema().extra_outcomes, (std::vector<std::string>{"y2_any"}));
  EXPECT_EQ(data.outcome("y2_any"), (std::vector<double>{1, 0}));
  EXPECT_THROW(data.outcome("nope"), ValidationError);
}

TEST(CsvLoad, WriteReadRoundTripIsExact) {
  Engine eng = make_engine(3, 0);
  std::ostringstream text;
  text << "id,y,d,z_g,x_1,x_2\n";
  for (int i = 0; i < 50; ++i) {
    text << i << ',' << csv::format_double(standard_normal(eng) * 1e3) << ',' << (i % 2 ? 1 : -1) << ','
         << "g" << (i % 3) << ',' << csv::format_double(uniform01(eng)) << ','
         << csv::format_double(standard_normal(eng) / 7) << '\n';
  }
  const auto a = parse(text.str());
  std::ostringstream out;
  write_csv(out, a, "round trip");
  const auto b = parse(out.str());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(a[i].d, b[i].d);
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a.schema().strata[0].labels[a[i].z[0]], b.schema().strata[0].labels[b[i].z[0]]);
  }
}

TEST(DatasetInvariants, DuplicateFeatureAndOutcomeCollision) {
  Schema s;
  s.features = {"x_1", "x_1"};
  std::vector<Unit> units{{"1", 0, 1, {}, {0, 0}, {}}, {"2", 0, -1, {}, {0, 0}, {}}};
  EXPECT_THROW(Dataset(s, units, 1.0), ValidationError);
  s.features = {"y", "x_2"};
  EXPECT_THROW(Dataset(s, units, 1.0), ValidationError);
}

TEST(DatasetInvariants, NegativeCostRejected) {
  EXPECT_THROW(testing_support::build({1, -1}, {1, 2}, {}, {}, -0.5), ValidationError);
}

TEST(DatasetInvariants, SubsetKeepsSchemaAndOrder) {
  const auto data = testing_support::build({1, -1, 1, -1}, {1, 2, 3, 4}, {"a", "b", "a", "b"});
  const std::vector<std::size_t> idx{3, 0};
  const auto s = data.subset(idx);
  EXPECT_EQ(s.outcome("y"), (std::vector<double>{4, 1}));
  EXPECT_EQ(s.schema().strata[0].labels, data.schema().strata[0].labels);
}

TEST(Folds, OneUnitPerFoldWhenKEqualsN) {
  const auto f = split_folds(20, 20, 9);
  std::vector<int> count(20, 0);
  for (auto v : f) ++count[v];
  for (int c : count) EXPECT_EQ(c, 1);
}

TEST(Folds, UnevenSizesDifferByOne) {
  const auto f = split_folds(10, 3, 4);
  std::vector<int> count(3, 0);
  for (auto v : f) ++count[v];
  EXPECT_EQ(count, (std::vector<int>{4, 3, 3}));
}

TEST(Folds, DeterministicPerSeed) {
  EXPECT_EQ(split_folds(10, 2, 5), split_folds(10, 2, 5));
  EXPECT_NE(split_folds(200, 5, 5), split_folds(200, 5, 6));
}

TEST(Folds, InvalidCountsRejected) {
  EXPECT_THROW(split_folds(10, 1, 0), ValidationError);
  EXPECT_THROW(split_folds(10, 11, 0), ValidationError);
}

TEST(Folds, PartitionProperty) {
  Engine eng = make_engine(11, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + uniform_below(eng, 300);
    const std::size_t k = 2 + uniform_below(eng, n - 1);
    const auto f = split_folds(n, k, rep);
    std::vector<std::size_t> count(k, 0);
    for (auto v : f) {
      ASSERT_LT(v, k);
      ++count[v];
    }
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    EXPECT_LE(*hi - *lo, 1u);
    std::size_t total = 0;
    for (std::size_t g = 0; g < k; ++g) {
      const auto in = fold_members(f, g, true), out = fold_members(f, g, false);
      EXPECT_EQ(in.size() + out.size(), n);
      total += in.size();
    }
    EXPECT_EQ(total, n);
  }
}
