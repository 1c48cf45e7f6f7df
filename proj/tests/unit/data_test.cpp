#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "optree/data.hpp"
#include "optree/error.hpp"

namespace optree {
namespace {

RawTable parse(const std::string& text, const std::string& label) {
  std::istringstream in(text);
  return parse_csv(in, label);
}

Dataset numeric(std::vector<std::vector<double>> cols) {
  Dataset d;
  d.cols = cols.size();
  d.rows = cols.front().size();
  d.x.resize(d.rows * d.cols);
  for (std::size_t f = 0; f < d.cols; ++f) {
    for (std::size_t i = 0; i < d.rows; ++i) d.x[i * d.cols + f] = cols[f][i];
    d.feature_names.push_back("f" + std::to_string(f));
    d.origins.push_back({f, std::nullopt});
  }
  d.target.assign(d.rows, 0.0);
  return d;
}

TEST(LoadCsv, ParsesHeaderAndRows) {
  const auto t = parse("a,b,y\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n", "y");
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(t.label, "y");
  EXPECT_EQ(t.label_index, 2u);
  EXPECT_EQ(t.rows[3][1], "11");
}

TEST(LoadCsv, QuotedFieldsAndCrlf) {
  const auto t = parse("name,y\r\n\"a,b\",1\r\n\"say \"\"hi\"\"\",2\r\n", "y");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "a,b");
  EXPECT_EQ(t.rows[1][0], "say \"hi\"");
}

TEST(LoadCsv, RaggedRowRejected) {
  EXPECT_THROW(parse("a,b,y\n1,2,3\n1,2\n", "y"), DataError);
}

TEST(LoadCsv, AbsentLabelRejected) {
  EXPECT_THROW(parse("a,b,z\n1,2,3\n", "y"), DataError);
}

TEST(LoadCsv, EmptyAndMissingValuesRejected) {
  EXPECT_THROW(parse("", "y"), DataError);
  EXPECT_THROW(parse("a,y\n", "y"), DataError);
  EXPECT_THROW(parse("a,y\n1,2\n?,3\n", "y"), DataError);
  EXPECT_THROW(parse("a,y\n,2\n", "y"), DataError);
}

TEST(LoadCsv, MissingFileRejected) {
  EXPECT_THROW(load_csv("/nonexistent/dir/file.csv", "y"), DataError);
}

TEST(LoadCsv, ReadsFromDisk) {
  const auto path = std::filesystem::temp_directory_path() / "optree_data_test.csv";
  {
    std::ofstream out(path);
    out << "a,y\n1,2\n3,4\n";
  }
  const auto t = load_csv(path, "y");
  EXPECT_EQ(t.size(), 2u);
  std::filesystem::remove(path);
}

TEST(Encode, OneHotInLexicographicOrder) {
  const auto t = parse("color,y\nred,1\ngreen,2\nblue,3\nred,4\n", "y");
  const auto e = encode(t, Task::regression);
  ASSERT_EQ(e.data.cols, 3u);
  EXPECT_EQ(e.schema.columns[0].categories, (std::vector<std::string>{"blue", "green", "red"}));
  EXPECT_EQ(e.data.feature_names[0], "color=blue");
  // Row 0 is red.
  EXPECT_EQ(e.data.at(0, 0), 0.0);
  EXPECT_EQ(e.data.at(0, 1), 0.0);
  EXPECT_EQ(e.data.at(0, 2), 1.0);
  for (std::size_t i = 0; i < e.data.rows; ++i) {
    double sum = 0;
    for (std::size_t f = 0; f < 3; ++f) sum += e.data.at(i, f);
    EXPECT_EQ(sum, 1.0);
  }
}

TEST(Encode, NumericPassThroughIsLossless) {
  const auto t = parse("v,y\n3.5,1\n2.0,2\n-1e-3,3\n", "y");
  const auto e = encode(t, Task::regression);
  ASSERT_EQ(e.data.cols, 1u);
  EXPECT_EQ(e.data.at(0, 0), 3.5);
  EXPECT_EQ(e.data.at(1, 0), 2.0);
  EXPECT_EQ(e.data.at(2, 0), -1e-3);
  EXPECT_EQ(e.data.target, (std::vector<double>{1, 2, 3}));
}

TEST(Encode, ClassLabelsSorted) {
  const auto t = parse("v,y\n1,yes\n2,no\n3,yes\n", "y");
  const auto e = encode(t, parse_task("classification").value());
  EXPECT_EQ(e.data.task, Task::binary);
  EXPECT_EQ(e.data.label, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(e.schema.class_labels, (std::vector<std::string>{"no", "yes"}));
  EXPECT_EQ(e.data.classes, 2);
}

TEST(Encode, MulticlassResolved) {
  const auto t = parse("v,y\n1,a\n2,b\n3,c\n", "y");
  const auto e = encode(t, Task::multiclass);
  EXPECT_EQ(e.data.task, Task::multiclass);
  EXPECT_EQ(e.data.classes, 3);
  EXPECT_THROW(encode(t, Task::binary), DataError);
}

TEST(Encode, Errors) {
  EXPECT_THROW(encode(parse("v,y\n1,a\n2,b\n", "y"), Task::regression), DataError);
  EXPECT_THROW(encode(parse("v,y\n1,a\n2,a\n", "y"), Task::multiclass), DataError);
}

TEST(Encode, UnknownCategoryBecomesZeroIndicators) {
  const auto train = encode(parse("c,y\na,1\nb,2\n", "y"), Task::regression);
  std::size_t unknown = 0;
  const auto test = encode_with(parse("c,y\nz,1\n", "y"), train.schema, &unknown);
  EXPECT_EQ(unknown, 1u);
  EXPECT_EQ(test.at(0, 0), 0.0);
  EXPECT_EQ(test.at(0, 1), 0.0);
}

TEST(Standardize, ClosedFormValues) {
  const auto d = numeric({{1, 2, 3}, {0, 10, 20}});
  const auto p = fit_standardize(d);
  EXPECT_NEAR(p.mean[0], 2.0, 1e-12);
  EXPECT_NEAR(p.mean[1], 10.0, 1e-12);
  EXPECT_NEAR(p.stddev[0], 0.81650, 1e-5);
  EXPECT_NEAR(p.stddev[1], 8.16497, 1e-5);
  const auto s = apply_standardize(d, p);
  EXPECT_NEAR(s.at(0, 0), -1.22474, 1e-5);
  EXPECT_NEAR(s.at(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(s.at(2, 0), 1.22474, 1e-5);
}

TEST(Standardize, ConstantColumn) {
  const auto d = numeric({{5, 5, 5}});
  const auto p = fit_standardize(d);
  EXPECT_TRUE(p.constant[0]);
  EXPECT_EQ(p.stddev[0], 1.0);
  const auto s = apply_standardize(d, p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.at(i, 0), 0.0);
}

TEST(Standardize, TrainMeanMapsToZero) {
  const auto p = fit_standardize(numeric({{1, 2, 3, 6}}));
  std::vector<double> row{3.0};
  standardize_row(row, p);
  EXPECT_NEAR(row[0], 0.0, 1e-15);
}

TEST(Standardize, DimensionMismatch) {
  const auto p = fit_standardize(numeric({{1, 2, 3}}));
  EXPECT_THROW(apply_standardize(numeric({{1, 2}, {3, 4}}), p), DataError);
}

TEST(Standardize, MomentsOnRandomData) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(3.0, 7.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> cols(4, std::vector<double>(57));
    for (auto& c : cols) {
      for (auto& v : c) v = g(rng) * (trial + 1);
    }
    const auto d = numeric(cols);
    const auto s = apply_standardize(d, fit_standardize(d));
    for (std::size_t f = 0; f < s.cols; ++f) {
      double m = 0, q = 0;
      for (std::size_t i = 0; i < s.rows; ++i) m += s.at(i, f);
      m /= static_cast<double>(s.rows);
      for (std::size_t i = 0; i < s.rows; ++i) q += (s.at(i, f) - m) * (s.at(i, f) - m);
      EXPECT_LT(std::abs(m), 1e-9);
      EXPECT_NEAR(std::sqrt(q / static_cast<double>(s.rows)), 1.0, 1e-9);
    }
  }
}

TEST(Split, SizesAndDeterminism) {
  SplitSpec spec{.seed = 7, .train = 0.8, .validation = 0.0, .test = 0.2};
  const auto a = split_indices(10, spec);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.validation.size(), 0u);
  EXPECT_EQ(a.test.size(), 2u);
  const auto b = split_indices(10, spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, NestedProportions) {
  const auto s = split_indices(100, {.seed = 1, .train = 0.8, .validation = 0.2, .test = 0.2});
  EXPECT_EQ(s.train.size(), 64u);
  EXPECT_EQ(s.validation.size(), 16u);
  EXPECT_EQ(s.test.size(), 20u);
}

TEST(Split, PartitionProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 5 + seed * 7;
    const auto s = split_indices(n, {.seed = seed, .train = 0.8, .validation = 0.2, .test = 0.2});
    std::vector<int> seen(n, 0);
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      for (const auto i : *part) ++seen[i];
    }
    for (const int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(Split, DifferentSeedsDiffer) {
  const auto a = split_indices(50, {.seed = 1});
  const auto b = split_indices(50, {.seed = 2});
  EXPECT_NE(a.test, b.test);
}

TEST(Split, TooSmallOrInfeasible) {
  EXPECT_THROW(split_indices(4, {}), DataError);
  EXPECT_THROW(split_indices(5, {.seed = 0, .train = 0.98, .validation = 0.0, .test = 0.02}), DataError);
}

TEST(FeatureGaps, Definition) {
  const auto g = feature_gaps(numeric({{0.0, 0.5, 0.5, 2.0}}));
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  const auto c = numeric({{1, 1, 1}});
  EXPECT_EQ(feature_gaps(c)[0], 1.0);
  EXPECT_TRUE(constant_features(c)[0]);
  const auto two = numeric({{0, 0}, {1, 3}});
  const auto g2 = feature_gaps(two);
  EXPECT_EQ(g2[0], 1.0);
  EXPECT_EQ(g2[1], 2.0);
  EXPECT_EQ(constant_features(two), (std::vector<bool>{true, false}));
}

TEST(FeatureGaps, LowerBoundsEveryPairwiseGap) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> v(-20, 20);
  std::vector<std::vector<double>> cols(3, std::vector<double>(25));
  for (auto& c : cols) {
    for (auto& x : c) x = v(rng) * 0.37;
  }
  const auto d = numeric(cols);
  const auto g = feature_gaps(d);
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t i = 0; i < d.rows; ++i) {
      for (std::size_t j = 0; j < d.rows; ++j) {
        const double diff = std::abs(d.at(i, f) - d.at(j, f));
        if (diff != 0.0) EXPECT_GE(diff, g[f]);
      }
    }
  }
}

TEST(ResolveFeatures, SourceAndEncodedNames) {
  const auto e = encode(parse("cyl,hp,origin,y\n4,100,eu,1\n6,150,us,2\n8,200,jp,3\n", "y"), Task::regression);
  const std::vector<std::string> by_source{"origin", "cyl"};
  EXPECT_EQ(resolve_features(e.data, e.schema, by_source), (std::vector<std::size_t>{0, 2, 3, 4}));
  const std::vector<std::string> encoded{"origin=us"};
  EXPECT_EQ(resolve_features(e.data, e.schema, encoded), (std::vector<std::size_t>{4}));
  const std::vector<std::string> bad{"weight"};
  EXPECT_THROW(resolve_features(e.data, e.schema, bad), DataError);
}

TEST(Dataset, SubsetAndConcat) {
  const auto d = numeric({{1, 2, 3, 4}});
  const std::vector<std::size_t> idx{3, 1};
  const auto s = d.subset(idx);
  EXPECT_EQ(s.rows, 2u);
  EXPECT_EQ(s.at(0, 0), 4.0);
  const auto c = s.concat(d);
  EXPECT_EQ(c.rows, 6u);
  EXPECT_EQ(c.at(2, 0), 1.0);
}

}  // namespace
}  // namespace optree
