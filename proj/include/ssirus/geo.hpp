#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"

namespace ssirus {

// Planar site coordinates in km (projected CRS; no projection happens here).
struct Location {
  double easting = 0.0;
  double northing = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

// C(h) = sigma2 * exp(-phi * h) for h > 0 and C(0) = sigma2 + tau2.
// sigma2 may be zero to express a pure-nugget (white) covariance.
struct ExponentialCovariance {
  double sigma2 = 1.0;
  double phi = 1.0 / 50.0;
  double tau2 = 0.0;

  void validate() const {
    require(std::isfinite(sigma2) && sigma2 >= 0.0, "covariance: sigma2 must be finite and >= 0");
    require(std::isfinite(phi) && phi > 0.0, "covariance: phi must be finite and > 0");
    require(std::isfinite(tau2) && tau2 >= 0.0, "covariance: tau2 must be finite and >= 0");
  }

  bool is_identity() const { return sigma2 == 0.0 && tau2 == 1.0; }
};

inline double distance(const Location& a, const Location& b) {
  return std::hypot(a.easting - b.easting, a.northing - b.northing);
}

inline Eigen::MatrixXd pairwise_distances(std::span<const Location> locs) {
  require(!locs.empty(), "pairwise_distances: need at least one location");
  for (const auto& l : locs) {
    require(std::isfinite(l.easting) && std::isfinite(l.northing), "pairwise_distances: non-finite coordinate");
  }
  const auto n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = distance(locs[i], locs[j]);
    }
  }
  return d;
}

inline double covariance(double h, const ExponentialCovariance& cov) {
  require(h >= 0.0, "covariance: negative lag");
  if (h == 0.0) return cov.sigma2 + cov.tau2;
  return cov.sigma2 * std::exp(-cov.phi * h);
}

// Sigma over sites: spatial part from distances plus tau2 on the diagonal only.
// Coincident but distinct sites share sigma2 without the nugget.
inline Eigen::MatrixXd covariance_matrix(std::span<const Location> locs, const ExponentialCovariance& cov) {
  const Eigen::MatrixXd d = pairwise_distances(locs);
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd sigma(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      sigma(i, j) = cov.sigma2 * std::exp(-cov.phi * d(i, j));
    }
    sigma(j, j) += cov.tau2;
  }
  return sigma;
}

// Lower Cholesky factor of Sigma together with its explicit inverse, which the
// GLS split search consumes column by column.
struct CovarianceFactor {
  Eigen::MatrixXd lower;
  Eigen::MatrixXd lower_inverse;
  bool identity = false;
  double jitter = 0.0;

  Eigen::Index size() const { return lower.rows(); }
};

inline constexpr std::size_t default_dense_limit = 2000;

namespace detail {

// Cholesky with a diagonal jitter ladder: 1e-10 * scale, x10 per step, up to
// 1e-4 * scale. Returns the factorization and the jitter that made it succeed.
inline std::pair<Eigen::LLT<Eigen::MatrixXd>, double> llt_with_jitter(const Eigen::MatrixXd& sigma, double scale) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  double jitter = 0.0;
  for (double step = 1e-10; llt.info() != Eigen::Success; step *= 10.0) {
    if (step > 1e-4 * (1.0 + 1e-9) || !(scale > 0.0)) {
      throw numeric_error("covariance matrix is not positive definite after jitter escalation");
    }
    jitter = step * scale;
    Eigen::MatrixXd jittered = sigma;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
  }
  return {std::move(llt), jitter};
}

inline CovarianceFactor factor_matrix(const Eigen::MatrixXd& sigma, double scale) {
  auto [llt, jitter] = llt_with_jitter(sigma, scale);
  CovarianceFactor f;
  f.lower = llt.matrixL();
  f.lower_inverse = f.lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(sigma.rows(), sigma.rows()));
  f.jitter = jitter;
  return f;
}

}  // namespace detail

inline CovarianceFactor build_factor(std::span<const Location> locs, const ExponentialCovariance& cov,
                                     std::size_t dense_limit = default_dense_limit) {
  cov.validate();
  require(!locs.empty(), "build_factor: no locations");
  require(locs.size() <= dense_limit, "build_factor: site count exceeds the dense factorization limit");
  const auto n = static_cast<Eigen::Index>(locs.size());
  if (cov.is_identity()) {
    CovarianceFactor f;
    f.lower = Eigen::MatrixXd::Identity(n, n);
    f.lower_inverse = Eigen::MatrixXd::Identity(n, n);
    f.identity = true;
    return f;
  }
  return detail::factor_matrix(covariance_matrix(locs, cov), cov.sigma2 > 0.0 ? cov.sigma2 : cov.tau2);
}

// Solves L z = values.
inline Eigen::VectorXd whiten(const Eigen::VectorXd& values, const CovarianceFactor& factor) {
  require(values.size() == factor.size(), "whiten: dimension mismatch");
  if (factor.identity) return values;
  return factor.lower.triangularView<Eigen::Lower>().solve(values);
}

inline Eigen::VectorXd color(const Eigen::VectorXd& values, const CovarianceFactor& factor) {
  require(values.size() == factor.size(), "color: dimension mismatch");
  if (factor.identity) return values;
  return factor.lower.triangularView<Eigen::Lower>() * values;
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

inline Eigen::VectorXd simulate_gp(const CovarianceFactor& factor, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return color(standard_normal_vector(factor.size(), rng), factor);
}

inline Eigen::VectorXd simulate_gp(std::span<const Location> locs, const ExponentialCovariance& cov,
                                   std::uint64_t seed) {
  return simulate_gp(build_factor(locs, cov), seed);
}

}  // namespace ssirus
