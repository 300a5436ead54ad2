#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "ssirus/dataset.hpp"
#include "support.hpp"

using namespace ssirus;

namespace {

GeoDataset column_dataset(const std::vector<double>& col) {
  GeoDataset ds;
  const auto n = static_cast<Eigen::Index>(col.size());
  ds.y = Eigen::VectorXd::Zero(n);
  ds.x = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  for (Eigen::Index i = 0; i < n; ++i) ds.locations.push_back({static_cast<double>(i), 0.0});
  ds.predictor_names = {"v"};
  ds.predictor_kinds = {PredictorKind::continuous};
  return ds;
}

// Type-7 quantile written independently of the library.
double quantile_oracle(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (pos - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace

TEST(Standardize, SampleSdConvention) {
  const auto s = standardize(column_dataset({1.0, 2.0, 3.0}));
  EXPECT_NEAR(s.dataset.x(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(s.dataset.x(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(s.dataset.x(2, 0), 1.0, 1e-12);
  EXPECT_FALSE(s.constant[0]);
}

TEST(Standardize, Idempotent) {
  const auto once = standardize(fixtures::random_dataset(50, 3, 4));
  const auto twice = standardize(once.dataset);
  EXPECT_LT((once.dataset.x - twice.dataset.x).cwiseAbs().maxCoeff(), 1e-12);
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(once.dataset.x.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(sample_variance(once.dataset.x.col(j))), 1.0, 1e-12);
  }
}

TEST(Standardize, ConstantColumnFlagged) {
  const auto s = standardize(column_dataset({4.0, 4.0, 4.0}));
  EXPECT_TRUE(s.constant[0]);
  EXPECT_EQ(s.dataset.x(1, 0), 4.0);
}

TEST(Discretization, DecilesOfOneToHundred) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  const auto map = fit_discretization(column_dataset(v), 10);
  ASSERT_EQ(map.columns[0].cutpoints.size(), 10u);
  for (int k = 1; k <= 10; ++k) EXPECT_NEAR(map.columns[0].cutpoints[k - 1], quantile_oracle(v, k / 10.0), 1e-12);
  EXPECT_NEAR(map.columns[0].map(5.0), quantile_oracle(v, 0.1), 1e-12);
  EXPECT_NEAR(map.columns[0].map(5.0), 10.9, 1e-12);
}

TEST(Discretization, ConstantColumnSingleCutpoint) {
  const auto ds = column_dataset({2.0, 2.0, 2.0, 2.0});
  const auto map = fit_discretization(ds, 10);
  ASSERT_EQ(map.columns[0].cutpoints.size(), 1u);
  const auto b = apply_discretization(ds, map);
  EXPECT_TRUE((b.x.array() == 2.0).all());
}

TEST(Discretization, AtMostQDistinctValues) {
  const auto ds = fixtures::random_dataset(400, 5, 8);
  const auto b = apply_discretization(ds, fit_discretization(ds, 10));
  for (int j = 0; j < 5; ++j) {
    const std::set<double> distinct(b.x.col(j).begin(), b.x.col(j).end());
    EXPECT_LE(distinct.size(), 10u);
  }
}

TEST(Discretization, IdempotentAndMonotone) {
  const auto ds = fixtures::random_dataset(137, 3, 12);
  const auto map = fit_discretization(ds, 7);
  const auto once = apply_discretization(ds, map);
  EXPECT_EQ(apply_discretization(once, map).x, once.x);
  for (int j = 0; j < 3; ++j) {
    std::vector<int> order(137);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return ds.x(a, j) < ds.x(b, j); });
    for (std::size_t k = 1; k < order.size(); ++k) EXPECT_LE(once.x(order[k - 1], j), once.x(order[k], j));
  }
}

TEST(Discretization, TestValuesAboveRangeClampToLargestCutpoint) {
  const auto map = fit_discretization(column_dataset({1.0, 2.0, 3.0, 4.0}), 2);
  EXPECT_EQ(map.columns[0].map(100.0), map.columns[0].cutpoints.back());
}

TEST(Discretization, DiscreteColumnsUntouched) {
  auto ds = fixtures::random_dataset(30, 2, 1);
  ds.predictor_kinds[1] = PredictorKind::discrete;
  const auto map = fit_discretization(ds, 5);
  EXPECT_TRUE(map.columns[1].cutpoints.empty());
  EXPECT_EQ(apply_discretization(ds, map).x.col(1), ds.x.col(1));
}

TEST(Discretization, RejectsSmallQAndUnseenColumns) {
  const auto ds = fixtures::random_dataset(20, 2, 1);
  EXPECT_THROW(fit_discretization(ds, 1), input_error);
  auto other = ds;
  other.predictor_names[1] = "zz";
  EXPECT_THROW(apply_discretization(other, fit_discretization(ds, 4)), input_error);
}

TEST(RandomSplit, SizesDisjointCoverDeterministic) {
  const auto ds = fixtures::random_dataset(500, 2, 3);
  const auto a = random_split(ds, 400, 17);
  EXPECT_EQ(a.train.rows(), 400);
  EXPECT_EQ(a.test.rows(), 100);
  std::set<int> all(a.train_rows.begin(), a.train_rows.end());
  for (int r : a.test_rows) EXPECT_TRUE(all.insert(r).second);
  EXPECT_EQ(all.size(), 500u);
  const auto b = random_split(ds, 400, 17);
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.test_rows, b.test_rows);
}

TEST(RandomSplit, LeaveOneOutAndBounds) {
  const auto ds = fixtures::random_dataset(20, 2, 3);
  EXPECT_EQ(random_split(ds, 19, 1).test.rows(), 1);
  EXPECT_THROW(random_split(ds, 20, 1), input_error);
  EXPECT_THROW(random_split(ds, 0, 1), input_error);
}

TEST(RandomSplit, RowAlignmentPreserved) {
  const auto ds = fixtures::random_dataset(60, 3, 5);
  const auto s = random_split(ds, 45, 2);
  auto check = [&](const GeoDataset& part, const std::vector<int>& rows) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      EXPECT_EQ(part.y[i], ds.y[rows[k]]);
      EXPECT_EQ(part.x.row(i), ds.x.row(rows[k]));
      EXPECT_EQ(part.locations[k], ds.locations[static_cast<std::size_t>(rows[k])]);
    }
  };
  check(s.train, s.train_rows);
  check(s.test, s.test_rows);
}

TEST(Csv, RoundTripIsExact) {
  const auto ds = fixtures::random_dataset(25, 3, 9);
  std::stringstream io;
  write_dataset_csv(io, ds);
  const auto back = read_dataset_csv(io);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.x, ds.x);
  EXPECT_EQ(back.locations, ds.locations);
  EXPECT_EQ(back.predictor_names, ds.predictor_names);
}

TEST(Csv, MalformedInputIsInputError) {
  std::stringstream missing("a,b\n1,2\n");
  EXPECT_THROW(read_dataset_csv(missing), input_error);
  std::stringstream ragged("easting,northing,y,a\n1,2,3\n4,5,6\n");
  EXPECT_THROW(read_dataset_csv(ragged), input_error);
  std::stringstream bad("easting,northing,y,a\n1,2,3,x\n4,5,6,7\n");
  EXPECT_THROW(read_dataset_csv(bad), input_error);
}

TEST(Csv, IgnoresIdAndAcceptsAnyColumnOrder) {
  std::stringstream in("\xEF\xBB\xBFid,a,y,northing,easting\n0,1.5,2,3,4\n1,2.5,3,4,5\n");
  const auto ds = read_dataset_csv(in);
  ASSERT_EQ(ds.predictors(), 1);
  EXPECT_EQ(ds.predictor_names[0], "a");
  EXPECT_EQ(ds.locations[1].easting, 5.0);
  EXPECT_EQ(ds.y[0], 2.0);
}

TEST(Csv, MissingFileIsIoError) { EXPECT_THROW(read_dataset_csv(std::string("/nonexistent/x.csv")), io_error); }
