#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ssirus/ridge.hpp"

using namespace ssirus;

namespace {

double objective(const Eigen::MatrixXd& g, const Eigen::VectorXd& y, double b0, const Eigen::VectorXd& b,
                 double lambda) {
  return (y.array() - b0 - (g * b).array()).square().mean() + lambda * b.squaredNorm();
}

Eigen::MatrixXd indicator_design(int n, std::uint64_t seed, int k) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd g(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) g(i, j) = u(rng) < 0.5 ? 1.0 + j : -0.5 * j;
  }
  return g;
}

}  // namespace

TEST(NonNegRidge, ExactFitSingleRule) {
  Eigen::MatrixXd g(6, 1);
  g << 3.72, 3.72, 3.72, 4.44, 4.44, 4.44;
  const Eigen::VectorXd y = g.col(0);
  const auto fit = fit_nonneg_ridge(g, y, 1e-12);
  EXPECT_NEAR(fit.weights[0], 1.0, 1e-6);
  EXPECT_NEAR(fit.intercept, 0.0, 1e-6);
}

TEST(NonNegRidge, NegativeCorrelationGivesZeroWeight) {
  Eigen::MatrixXd g(6, 1);
  g << 1, 1, 1, 2, 2, 2;
  const Eigen::VectorXd y = -2.0 * g.col(0);
  const auto fit = fit_nonneg_ridge(g, y, 1e-6);
  EXPECT_EQ(fit.weights[0], 0.0);
  EXPECT_NEAR(fit.intercept, y.mean(), 1e-12);
}

TEST(NonNegRidge, ThreeRuleGridOracle) {
  const int n = 40;
  const Eigen::MatrixXd g = indicator_design(n, 3, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 0.3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 0.7 * g(i, 0) - 0.4 * g(i, 1) + 0.25 * g(i, 2) + z(rng);
  const double lambda = 0.01;
  const auto fit = fit_nonneg_ridge(g, y, lambda);

  // Grid over (b1, b2) at step 1e-3; b3 and b0 are minimized exactly for each
  // grid point (b3 clipped at 0, then snapped to the grid).
  const double ym = y.mean();
  const Eigen::RowVectorXd gm = g.colwise().mean();
  const Eigen::MatrixXd gc = g.rowwise() - gm;
  const Eigen::VectorXd yc = y.array() - ym;
  const double h33 = gc.col(2).squaredNorm() / n + lambda;
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d arg = Eigen::Vector3d::Zero();
  for (int i = 0; i <= 1500; ++i) {
    for (int j = 0; j <= 1500; ++j) {
      const double b1 = i * 1e-3, b2 = j * 1e-3;
      const Eigen::VectorXd r = yc - b1 * gc.col(0) - b2 * gc.col(1);
      double b3 = std::max(0.0, r.dot(gc.col(2)) / n / h33);
      b3 = std::round(b3 * 1e3) * 1e-3;
      const Eigen::Vector3d b(b1, b2, b3);
      const double v = objective(g, y, ym - gm.dot(b), b, lambda);
      if (v < best) {
        best = v;
        arg = b;
      }
    }
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(fit.weights[k], arg[k], 2e-3) << "weight " << k;
  EXPECT_EQ(fit.weights[1], 0.0);
  EXPECT_LE(objective(g, y, fit.intercept, fit.weights, lambda), best + 1e-12);
}

TEST(NonNegRidge, KktConditionsHold) {
  const int n = 80;
  const Eigen::MatrixXd g = indicator_design(n, 9, 6);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = g(i, 0) - g(i, 3) + 0.5 * g(i, 5) + z(rng);
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const auto fit = fit_nonneg_ridge(g, y, lambda);
    const Eigen::VectorXd r = y.array() - fit.intercept - (g * fit.weights).array();
    EXPECT_NEAR(r.mean(), 0.0, 1e-10);
    // gradient of the objective w.r.t. each weight
    const Eigen::VectorXd grad = -2.0 / n * g.transpose() * r + 2.0 * lambda * fit.weights;
    for (int k = 0; k < 6; ++k) {
      EXPECT_GE(fit.weights[k], 0.0);
      if (fit.weights[k] > 0.0) EXPECT_NEAR(grad[k], 0.0, 1e-8);
      else EXPECT_GE(grad[k], -1e-8);
    }
  }
}

TEST(NonNegRidge, EmptyDesignIsInterceptOnly) {
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, 1.0, 5.0);
  const auto fit = fit_nonneg_ridge(Eigen::MatrixXd(5, 0), y, 1.0);
  EXPECT_EQ(fit.intercept, 3.0);
  EXPECT_EQ(fit.weights.size(), 0);
  EXPECT_THROW(fit_nonneg_ridge(Eigen::MatrixXd(4, 1), y, 1.0), input_error);
  EXPECT_THROW(fit_nonneg_ridge(Eigen::MatrixXd::Ones(5, 1), y, -1.0), input_error);
}

TEST(LambdaGrid, FiftyLogSpacedValues) {
  Eigen::MatrixXd g(4, 2);
  g << 0, 1, 0, 1, 2, 3, 2, 3;  // population variances 1 and 1
  const auto grid = ridge_lambda_grid(g);
  ASSERT_EQ(grid.size(), 50u);
  EXPECT_NEAR(grid.front(), 1e-4, 1e-18);
  EXPECT_NEAR(grid.back(), 1e2, 1e-10);
  for (std::size_t k = 1; k < grid.size(); ++k) EXPECT_NEAR(grid[k] / grid[k - 1], std::pow(1e6, 1.0 / 49.0), 1e-12);
}

TEST(RidgeCv, PicksFromGridAndIsDeterministic) {
  const int n = 60;
  const Eigen::MatrixXd g = indicator_design(n, 1, 4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 0.5);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 0.5 * g(i, 1) + z(rng);
  const auto grid = ridge_lambda_grid(g);
  const auto a = fit_nonneg_ridge_cv(g, y, grid, 10, 3);
  const auto b = fit_nonneg_ridge_cv(g, y, grid, 10, 3);
  EXPECT_NE(std::find(grid.begin(), grid.end(), a.lambda), grid.end());
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_TRUE((a.weights.array() >= 0.0).all());
  EXPECT_GT(a.weights[1], 0.0);
}
