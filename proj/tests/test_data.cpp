#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "cfaudit/csv.hpp"
#include "cfaudit/data.hpp"
#include "cfaudit/error.hpp"
#include "test_util.hpp"

namespace cfaudit {
namespace {

using testing::TempDir;

SchemaConfig wy_schema() {
  SchemaConfig s;
  s.treatment_column = "w";
  s.outcome_column = "y";
  return s;
}

Dataset column_dataset(const std::vector<double>& col, const std::vector<bool>& missing) {
  Dataset d;
  const std::size_t n = col.size();
  d.x = Matrix(n, 1);
  d.missing_mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    d.x(i, 0) = missing[i] ? std::numeric_limits<double>::quiet_NaN() : col[i];
    d.missing_mask[i] = missing[i];
  }
  d.w.assign(n, 0.0);
  d.y.assign(n, 0.0);
  d.feature_names = {"x1"};
  return d;
}

// ---- CSV ----

TEST(Csv, QuotedFieldsCrlfAndBom) {
  const auto t = parse_csv("\xEF\xBB\xBF" "a,\"b,c\",d\r\n1,\"say \"\"hi\"\"\",3\r\n");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b,c", "d"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
}

TEST(Csv, RaggedRowIsDataError) { EXPECT_THROW(parse_csv("a,b\n1,2,3\n"), DataError); }

TEST(Csv, FormatDoubleRoundTripsExactly) {
  const double values[] = {0.1, 1.0 / 3.0, -2.5e-300, 1.7976931348623157e308, 5e-324, 123456789.125};
  for (double v : values) {
    const auto back = parse_double(format_double(v));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(std::bit_cast<std::uint64_t>(*back), std::bit_cast<std::uint64_t>(v));
  }
}

TEST(Csv, ParseDoubleRejectsJunk) {
  EXPECT_FALSE(parse_double("abc"));
  EXPECT_FALSE(parse_double("1.2.3"));
  EXPECT_FALSE(parse_double(""));
  EXPECT_EQ(parse_double(" +4.5 "), 4.5);
}

// ---- load_csv ----

TEST(LoadCsv, ThreeRowsNoMissing) {
  TempDir tmp;
  const auto path = tmp.file("d.csv", "w,y,x1\n0,1.5,0.25\n1,2.5,0.5\n1,3,0.75\n");
  const Dataset d = load_csv(path, wy_schema());
  EXPECT_EQ(d.n(), 3u);
  EXPECT_EQ(d.p(), 1u);
  for (auto m : d.missing_mask) EXPECT_EQ(m, 0);
  EXPECT_EQ(d.x(2, 0), 0.75);
  EXPECT_EQ(d.y[0], 1.5);
  EXPECT_EQ(d.feature_names, std::vector<std::string>{"x1"});
}

TEST(LoadCsv, EmptyCellSetsMask) {
  TempDir tmp;
  const auto path = tmp.file("d.csv", "w,y,x1\n0,1,0.1\n1,2,\n0,3,0.3\n");
  const Dataset d = load_csv(path, wy_schema());
  EXPECT_TRUE(d.missing(1, 0));
  EXPECT_FALSE(d.missing(0, 0));
  EXPECT_TRUE(std::isnan(d.x(1, 0)));
}

TEST(LoadCsv, CustomMissingToken) {
  TempDir tmp;
  const auto path = tmp.file("d.csv", "w,y,x1\n0,1,NA\n1,2,5\n");
  SchemaConfig s = wy_schema();
  s.missing_token = "NA";
  EXPECT_TRUE(load_csv(path, s).missing(0, 0));
  EXPECT_THROW(load_csv(path, wy_schema()), DataError);
}

TEST(LoadCsv, AbsentColumnIsHeaderMismatch) {
  TempDir tmp;
  const auto path = tmp.file("d.csv", "w,y,x1\n0,1,2\n");
  SchemaConfig s = wy_schema();
  s.feature_columns = {"x9"};
  try {
    load_csv(path, s);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("x9"), std::string::npos);
  }
}

TEST(LoadCsv, ErrorContract) {
  TempDir tmp;
  EXPECT_THROW(load_csv(tmp.path() / "nope.csv", wy_schema()), DataError);
  EXPECT_THROW(load_csv(tmp.file("h.csv", "w,y,x1\n"), wy_schema()), DataError);
  EXPECT_THROW(load_csv(tmp.file("n.csv", "w,y,x1\n0,1,abc\n"), wy_schema()), DataError);
  SchemaConfig overlap = wy_schema();
  overlap.feature_columns = {"w", "x1"};
  EXPECT_THROW(load_csv(tmp.file("o.csv", "w,y,x1\n0,1,2\n"), overlap), DataError);
  EXPECT_THROW(load_csv(tmp.file("m.csv", "w,y,x1\n,1,2\n"), wy_schema()), DataError);
}

TEST(LoadCsv, ExcludedColumnsAndNuisanceSet) {
  TempDir tmp;
  const auto path = tmp.file("d.csv", "id,w,y,a,b\n7,0,1,2,3\n8,1,2,4,5\n");
  SchemaConfig s = wy_schema();
  s.excluded_columns = {"id"};
  s.nuisance_columns = {"a"};
  const Dataset d = load_csv(path, s);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.nuisance_names, std::vector<std::string>{"a"});
  EXPECT_EQ(d.nuisance_x().cols(), 1u);
}

TEST(LoadCsv, WriteBackRoundTripsBitExactAndPreservesOrder) {
  TempDir tmp;
  const auto vals = testing::uniform_vector(60, 17, -1e6, 1e6);
  std::string text = "w,y,x1,x2\n";
  for (std::size_t i = 0; i < 20; ++i) {
    text += format_double(i % 2) + "," + format_double(vals[3 * i]) + "," +
            format_double(vals[3 * i + 1]) + "," + (i == 4 ? "" : format_double(vals[3 * i + 2])) +
            "\n";
  }
  const Dataset d = load_csv(tmp.file("a.csv", text), wy_schema());
  write_csv(tmp.path() / "b.csv", d);
  const Dataset e = load_csv(tmp.path() / "b.csv", wy_schema());
  ASSERT_EQ(e.n(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(e.y[i]), std::bit_cast<std::uint64_t>(vals[3 * i]));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(e.x(i, 0)),
              std::bit_cast<std::uint64_t>(vals[3 * i + 1]));
    if (i != 4) EXPECT_EQ(e.x(i, 1), vals[3 * i + 2]);
  }
  EXPECT_TRUE(e.missing(4, 1));
  EXPECT_EQ(testing::slurp(tmp.path() / "b.csv"), text);
}

TEST(Schema, ParsesKeysListsAndComments) {
  const auto s = parse_schema(
      "# roles\ntreatment = educ\noutcome=income\nfeatures = a, b ,c\nexclude = id\n"
      "nuisance_features = a\nmissing_token = -99\n");
  EXPECT_EQ(s.treatment_column, "educ");
  EXPECT_EQ(s.outcome_column, "income");
  EXPECT_EQ(s.feature_columns, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(s.excluded_columns, std::vector<std::string>{"id"});
  EXPECT_EQ(s.nuisance_columns, std::vector<std::string>{"a"});
  EXPECT_EQ(s.missing_token, "-99");
}

TEST(Schema, UnknownKeyRejected) { EXPECT_THROW(parse_schema("colour = red\n"), DataError); }

// ---- imputation ----

TEST(ImputeMedian, OddObservedCount) {
  const Dataset d = impute_median(column_dataset({1, 2, 0, 4}, {false, false, true, false}));
  EXPECT_EQ(d.x.column(0), (std::vector<double>{1, 2, 2, 4}));
  EXPECT_TRUE(d.missing(2, 0));  // mask preserved
}

TEST(ImputeMedian, SecondExample) {
  const Dataset d = impute_median(column_dataset({1, 0, 3, 7}, {false, true, false, false}));
  EXPECT_EQ(d.x.column(0), (std::vector<double>{1, 3, 3, 7}));
}

TEST(ImputeMedian, EvenCountUsesMeanOfCentralPair) {
  const Dataset d = impute_median(column_dataset({1, 0, 2, 10, 4}, {false, true, false, false, false}));
  EXPECT_EQ(d.x(1, 0), 3.0);
}

TEST(ImputeMedian, NoMissingIsIdentity) {
  const Dataset src = column_dataset({5, 1, 3}, {false, false, false});
  EXPECT_EQ(impute_median(src).x, src.x);
}

TEST(ImputeMedian, FullyMissingColumnThrows) {
  EXPECT_THROW(impute_median(column_dataset({0, 0}, {true, true})), DataError);
}

TEST(ImputeMedian, IdempotentOnRandomData) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto v = testing::uniform_vector(40, seed);
    const auto m = testing::uniform_vector(40, seed + 1000, 0, 1);
    std::vector<bool> miss(40);
    for (std::size_t i = 0; i < 40; ++i) miss[i] = m[i] < 0.3;
    miss[0] = false;
    const Dataset once = impute_median(column_dataset(v, miss));
    const Dataset twice = impute_median(once);
    EXPECT_EQ(once.x, twice.x);
    EXPECT_EQ(once.missing_mask, twice.missing_mask);
    for (double x : once.x.data()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(MissingIndicators, AppendedOnlyForColumnsWithMissingCells) {
  Dataset d;
  d.x = Matrix(3, 2, std::vector<double>{1, 5, 0, 6, 3, 7});
  d.missing_mask = {0, 0, 1, 0, 0, 0};
  d.w = {0, 1, 0};
  d.y = {1, 2, 3};
  d.feature_names = {"a", "b"};
  const Dataset e = add_missing_indicators(d);
  EXPECT_EQ(e.feature_names, (std::vector<std::string>{"a", "b", "a_missing"}));
  EXPECT_EQ(e.x.column(2), (std::vector<double>{0, 1, 0}));
  EXPECT_TRUE(e.missing(1, 0));
  EXPECT_FALSE(e.missing(1, 2));
  EXPECT_NO_THROW(e.validate());
  EXPECT_EQ(impute_median(e).x.column(0), (std::vector<double>{1, 2, 3}));
  d.missing_mask.assign(6, 0);
  EXPECT_EQ(add_missing_indicators(d).feature_names.size(), 2u);
}

TEST(Median, Definition) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), DataError);
}

// ---- summary ----

TEST(Summarize, TreatmentTypeFlag) {
  Dataset d = column_dataset({1, 2, 3, 4}, {false, false, false, false});
  d.w = {0, 1, 1, 0};
  EXPECT_EQ(summarize(d).treatment_type, TreatmentType::kBinary);
  d.w = {8, 12, 16, 20};
  EXPECT_EQ(summarize(d).treatment_type, TreatmentType::kContinuous);
  d.w = {1, 1, 1, 1};
  EXPECT_EQ(d.treatment_type(), TreatmentType::kBinary);  // support {1} is a subset of {0, 1}
}

TEST(Summarize, MissingFractionAndOrderStatistics) {
  std::vector<bool> miss(10, false);
  miss[1] = miss[4] = miss[7] = true;
  const Dataset d = column_dataset({9, 0, 1, 5, 0, 3, 7, 0, 2, 4}, miss);
  const auto s = summarize(d);
  ASSERT_EQ(s.columns.size(), 3u);
  const auto& c = s.columns[2];
  EXPECT_EQ(c.name, "x1");
  EXPECT_EQ(c.count, 7u);
  EXPECT_DOUBLE_EQ(c.missing_fraction, 0.3);
  EXPECT_EQ(c.min, 1.0);
  EXPECT_EQ(c.max, 9.0);
  EXPECT_EQ(c.median, 4.0);
}

TEST(Dataset, ValidateRejectsShapeMismatch) {
  Dataset d = column_dataset({1, 2}, {false, false});
  d.y.pop_back();
  EXPECT_THROW(d.validate(), DataError);
}

}  // namespace
}  // namespace cfaudit
