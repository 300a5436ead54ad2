#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/dataset.hpp"

namespace ssirus {

// Ridge regression with non-negative slopes and an unpenalized intercept:
//   minimize (1/n) |y - b0 - G beta|^2 + lambda |beta|^2   s.t. beta >= 0.
struct NonNegRidgeFit {
  double intercept = 0.0;
  Eigen::VectorXd weights;
  double lambda = 0.0;
};

namespace detail {

// Solves min 1/2 b'Hb - r'b, b >= 0 by cyclic coordinate descent followed by an
// exact solve on the detected active set.
inline Eigen::VectorXd nonneg_quadratic(const Eigen::MatrixXd& h, const Eigen::VectorXd& r, Eigen::VectorXd beta) {
  const Eigen::Index k = r.size();
  if (beta.size() != k) beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd grad = r - h * beta;  // negative gradient
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!(h(j, j) > 0.0)) continue;
      const double next = std::max(0.0, beta[j] + grad[j] / h(j, j));
      const double delta = next - beta[j];
      if (delta != 0.0) {
        grad -= delta * h.col(j);
        beta[j] = next;
        change = std::max(change, std::abs(delta) * std::sqrt(h(j, j)));
      }
    }
    if (change < 1e-13) break;
  }
  // Polish: solve the unconstrained system on the positive set and accept it
  // when it stays feasible and satisfies the KKT conditions.
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (beta[j] > 0.0) active.push_back(j);
  }
  if (!active.empty()) {
    const auto m = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd ha(m, m);
    Eigen::VectorXd ra(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      ra[a] = r[active[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < m; ++b) ha(a, b) = h(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ha);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd sol = ldlt.solve(ra);
      if ((sol.array() >= 0.0).all() && sol.allFinite()) {
        Eigen::VectorXd polished = Eigen::VectorXd::Zero(k);
        for (Eigen::Index a = 0; a < m; ++a) polished[active[static_cast<std::size_t>(a)]] = sol[a];
        const Eigen::VectorXd g = r - h * polished;
        const double tol = 1e-9 * std::max(1.0, r.cwiseAbs().maxCoeff());
        bool kkt = true;
        for (Eigen::Index j = 0; j < k; ++j) {
          if (polished[j] == 0.0 && g[j] > tol) kkt = false;
        }
        if (kkt) beta = polished;
      }
    }
  }
  return beta;
}

struct CenteredDesign {
  Eigen::MatrixXd gram;  // Gc'Gc / n
  Eigen::VectorXd cross;  // Gc'yc / n
  Eigen::RowVectorXd g_mean;
  double y_mean = 0.0;
};

inline CenteredDesign center_design(const Eigen::MatrixXd& g, const Eigen::VectorXd& y) {
  CenteredDesign d;
  const double n = static_cast<double>(y.size());
  d.y_mean = y.mean();
  d.g_mean = g.colwise().mean();
  const Eigen::MatrixXd gc = g.rowwise() - d.g_mean;
  d.gram = gc.transpose() * gc / n;
  d.cross = gc.transpose() * (y.array() - d.y_mean).matrix() / n;
  return d;
}

inline NonNegRidgeFit solve_centered(const CenteredDesign& d, double lambda, const Eigen::VectorXd& warm) {
  Eigen::MatrixXd h = d.gram;
  h.diagonal().array() += lambda;
  NonNegRidgeFit fit;
  fit.lambda = lambda;
  fit.weights = nonneg_quadratic(h, d.cross, warm);
  fit.intercept = d.y_mean - d.g_mean.dot(fit.weights);
  return fit;
}

}  // namespace detail

inline NonNegRidgeFit fit_nonneg_ridge(const Eigen::MatrixXd& g, const Eigen::VectorXd& y, double lambda) {
  require(g.rows() == y.size() && y.size() >= 1, "fit_nonneg_ridge: dimension mismatch");
  require(lambda >= 0.0, "fit_nonneg_ridge: lambda must be >= 0");
  if (g.cols() == 0) return NonNegRidgeFit{y.mean(), Eigen::VectorXd(0), lambda};
  return detail::solve_centered(detail::center_design(g, y), lambda, Eigen::VectorXd());
}

// 50 log-spaced penalties over [1e-4, 1e2] times the mean column variance of G.
inline std::vector<double> ridge_lambda_grid(const Eigen::MatrixXd& g, int count = 50) {
  double scale = 0.0;
  for (Eigen::Index j = 0; j < g.cols(); ++j) scale += population_variance(g.col(j));
  scale = g.cols() > 0 ? scale / static_cast<double>(g.cols()) : 1.0;
  if (!(scale > 0.0)) scale = 1.0;
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    const double e = -4.0 + 6.0 * static_cast<double>(i) / static_cast<double>(count - 1);
    grid.push_back(scale * std::pow(10.0, e));
  }
  return grid;
}

// Picks lambda by K-fold CV mean squared error over the grid (ties go to the
// larger penalty), then refits on all rows.
inline NonNegRidgeFit fit_nonneg_ridge_cv(const Eigen::MatrixXd& g, const Eigen::VectorXd& y,
                                          const std::vector<double>& grid, int folds, std::uint64_t seed) {
  require(g.rows() == y.size() && y.size() >= 2, "fit_nonneg_ridge_cv: dimension mismatch");
  require(!grid.empty(), "fit_nonneg_ridge_cv: empty penalty grid");
  if (g.cols() == 0) return NonNegRidgeFit{y.mean(), Eigen::VectorXd(0), 0.0};
  const auto n = static_cast<int>(y.size());
  const int k = std::clamp(folds, 2, n);
  const auto perm = seeded_permutation(n, seed);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % k;

  std::vector<double> sse(grid.size(), 0.0);
  for (int f = 0; f < k; ++f) {
    std::vector<int> tr, te;
    for (int i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    Eigen::MatrixXd gt(static_cast<Eigen::Index>(tr.size()), g.cols());
    Eigen::VectorXd yt(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t r = 0; r < tr.size(); ++r) {
      gt.row(static_cast<Eigen::Index>(r)) = g.row(tr[r]);
      yt[static_cast<Eigen::Index>(r)] = y[tr[r]];
    }
    const auto design = detail::center_design(gt, yt);
    Eigen::VectorXd warm;
    // descending penalties so each solve warm-starts from a sparser neighbour
    for (std::size_t li = grid.size(); li-- > 0;) {
      const auto fit = detail::solve_centered(design, grid[li], warm);
      warm = fit.weights;
      for (int i : te) {
        const double e = y[i] - fit.intercept - g.row(i).dot(fit.weights);
        sse[li] += e * e;
      }
    }
  }
  std::size_t best = grid.size() - 1;
  for (std::size_t li = grid.size(); li-- > 0;) {
    if (sse[li] < sse[best] * (1.0 - 1e-12)) best = li;
  }
  return fit_nonneg_ridge(g, y, grid[best]);
}

}  // namespace ssirus
