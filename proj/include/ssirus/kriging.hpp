#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/geo.hpp"
#include "ssirus/log.hpp"
#include "ssirus/optim.hpp"

namespace ssirus {

struct EmpiricalVariogram {
  std::vector<int> bins;        // index of each reported (nonempty) bin
  std::vector<double> lags;     // mean pair distance in the bin (km)
  std::vector<double> gamma;    // method-of-moments semivariance
  std::vector<long> pairs;
  double max_lag = 0.0;
  int bin_count = 0;

  std::size_t size() const { return gamma.size(); }
};

// gamma(h) = tau2 + sigma2 * (1 - exp(-phi h)) for h > 0
struct VariogramModel {
  double nugget = 0.0;
  double partial_sill = 0.0;
  double phi = 1.0;

  double operator()(double h) const {
    return h <= 0.0 ? 0.0 : nugget + partial_sill * (1.0 - std::exp(-phi * h));
  }

  ExponentialCovariance covariance() const { return {partial_sill, phi, nugget}; }
  static VariogramModel from(const ExponentialCovariance& c) { return {c.tau2, c.sigma2, c.phi}; }
};

namespace detail {

// Bin of a pair distance: bins are (k w, (k + 1) w]; zero-lag pairs are dropped.
inline int lag_bin(double h, double width, int bin_count) {
  if (!(h > 0.0)) return -1;
  const double frac = h / width;
  const int b = static_cast<int>(std::ceil(frac)) - 1;
  return b < bin_count ? b : -1;
}

inline EmpiricalVariogram binned_semivariance(const Eigen::VectorXd& r, std::span<const Location> locs,
                                              std::span<const int> sites, int bin_count, double max_lag) {
  const double width = max_lag / bin_count;
  std::vector<double> dsum(static_cast<std::size_t>(bin_count), 0.0), gsum(static_cast<std::size_t>(bin_count), 0.0);
  std::vector<long> count(static_cast<std::size_t>(bin_count), 0);
  for (std::size_t a = 0; a < sites.size(); ++a) {
    for (std::size_t b = a + 1; b < sites.size(); ++b) {
      const int i = sites[a], j = sites[b];
      const double h = distance(locs[static_cast<std::size_t>(i)], locs[static_cast<std::size_t>(j)]);
      const int k = lag_bin(h, width, bin_count);
      if (k < 0) continue;
      const double d = r[i] - r[j];
      dsum[static_cast<std::size_t>(k)] += h;
      gsum[static_cast<std::size_t>(k)] += 0.5 * d * d;
      ++count[static_cast<std::size_t>(k)];
    }
  }
  EmpiricalVariogram v;
  v.max_lag = max_lag;
  v.bin_count = bin_count;
  for (int k = 0; k < bin_count; ++k) {
    const auto c = count[static_cast<std::size_t>(k)];
    if (c == 0) continue;
    v.bins.push_back(k);
    v.lags.push_back(dsum[static_cast<std::size_t>(k)] / static_cast<double>(c));
    v.gamma.push_back(gsum[static_cast<std::size_t>(k)] / static_cast<double>(c));
    v.pairs.push_back(c);
  }
  return v;
}

inline double max_pair_distance(std::span<const Location> locs) {
  double m = 0.0;
  for (std::size_t i = 0; i < locs.size(); ++i) {
    for (std::size_t j = i + 1; j < locs.size(); ++j) m = std::max(m, distance(locs[i], locs[j]));
  }
  return m;
}

}  // namespace detail

// Method-of-moments estimator over uniform lag bins on (0, max_lag];
// max_lag <= 0 selects half the maximum pair distance (the full distance for
// two sites, whose only pair would otherwise fall outside every bin).
inline EmpiricalVariogram empirical_variogram(const Eigen::VectorXd& residuals, std::span<const Location> locs,
                                              int n_bins = 15, double max_lag = 0.0) {
  require(residuals.size() == static_cast<Eigen::Index>(locs.size()), "empirical_variogram: size mismatch");
  require(residuals.size() >= 2, "empirical_variogram: need at least two sites");
  require(n_bins >= 1, "empirical_variogram: need at least one bin");
  if (!(max_lag > 0.0)) max_lag = (locs.size() == 2 ? 1.0 : 0.5) * detail::max_pair_distance(locs);
  require(max_lag > 0.0, "empirical_variogram: all sites coincide");
  std::vector<int> sites(locs.size());
  for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = static_cast<int>(i);
  return detail::binned_semivariance(residuals, locs, sites, n_bins, max_lag);
}

namespace detail {

// For fixed phi: iteratively reweighted non-negative least squares of
// gamma_hat on [1, 1 - exp(-phi h)] with weights N / gamma_model^2.
// Returns (nugget, partial sill, objective).
inline std::tuple<double, double, double> fit_sills(const EmpiricalVariogram& emp, double phi) {
  const std::size_t m = emp.size();
  const double floor = 1e-12 * std::max(1e-300, *std::max_element(emp.gamma.begin(), emp.gamma.end()));
  std::vector<double> u(m), model(emp.gamma);
  for (std::size_t j = 0; j < m; ++j) {
    u[j] = 1.0 - std::exp(-phi * emp.lags[j]);
    model[j] = std::max(model[j], floor);
  }
  double nugget = 0.0, sill = 0.0;
  auto objective = [&](double t, double s) {
    double o = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double g = std::max(t + s * u[j], floor);
      const double e = emp.gamma[j] - g;
      o += static_cast<double>(emp.pairs[j]) * e * e / (g * g);
    }
    return o;
  };
  for (int it = 0; it < 50; ++it) {
    double s00 = 0, s01 = 0, s11 = 0, b0 = 0, b1 = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double w = static_cast<double>(emp.pairs[j]) / (model[j] * model[j]);
      s00 += w;
      s01 += w * u[j];
      s11 += w * u[j] * u[j];
      b0 += w * emp.gamma[j];
      b1 += w * u[j] * emp.gamma[j];
    }
    // Candidate solutions on the faces of the non-negative quadrant.
    std::vector<std::pair<double, double>> cands{{std::max(0.0, b0 / s00), 0.0}};
    if (s11 > 0.0) cands.emplace_back(0.0, std::max(0.0, b1 / s11));
    const double det = s00 * s11 - s01 * s01;
    if (det > 1e-14 * s00 * s11) {
      const double t = (s11 * b0 - s01 * b1) / det, s = (s00 * b1 - s01 * b0) / det;
      if (t >= 0.0 && s >= 0.0) cands.emplace_back(t, s);
    }
    auto wls = [&](double t, double s) {
      double o = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double e = emp.gamma[j] - t - s * u[j];
        o += static_cast<double>(emp.pairs[j]) / (model[j] * model[j]) * e * e;
      }
      return o;
    };
    auto best = cands.front();
    for (const auto& c : cands) {
      if (wls(c.first, c.second) < wls(best.first, best.second)) best = c;
    }
    const double change = std::abs(best.first - nugget) + std::abs(best.second - sill);
    nugget = best.first;
    sill = best.second;
    for (std::size_t j = 0; j < m; ++j) model[j] = std::max(nugget + sill * u[j], floor);
    if (change <= 1e-14 * (nugget + sill + 1e-300)) break;
  }
  return {nugget, sill, objective(nugget, sill)};
}

}  // namespace detail

// Weighted least squares (weights = pair counts / gamma_model^2). phi is
// profiled by a log-grid scan followed by golden-section refinement; the two
// sills are solved for each phi. Falls back to a nugget-only model when the
// search produces no finite optimum.
inline VariogramModel fit_variogram(const EmpiricalVariogram& emp) {
  require(emp.size() >= 3, "fit_variogram: need at least three nonempty bins");
  const double hmin = *std::min_element(emp.lags.begin(), emp.lags.end());
  const double hmax = *std::max_element(emp.lags.begin(), emp.lags.end());
  const double lo = std::log(1e-2 / hmax), hi = std::log(1e2 / hmin);
  auto profile = [&](double log_phi) { return std::get<2>(detail::fit_sills(emp, std::exp(log_phi))); };

  const int grid = 120;
  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double v = profile(lo + (hi - lo) * i / grid);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best < 0 || !std::isfinite(best_val)) {
    log_warning("fit_variogram: no finite optimum, using a nugget-only model");
    double level = 0.0;
    for (double g : emp.gamma) level += g;
    return {level / static_cast<double>(emp.size()), 0.0, std::exp(hi)};
  }
  const double a = lo + (hi - lo) * std::max(0, best - 1) / grid;
  const double b = lo + (hi - lo) * std::min(grid, best + 1) / grid;
  auto [log_phi, val] = golden_section(profile, a, b, 1e-12);
  if (!(val <= best_val)) log_phi = lo + (hi - lo) * best / grid;
  const double phi = std::exp(log_phi);
  const auto [nugget, sill, obj] = detail::fit_sills(emp, phi);
  return {nugget, sill, phi};
}

struct VariogramBand {
  std::vector<int> bins;
  std::vector<double> lower;
  std::vector<double> upper;
};

// Site bootstrap: resample site indices with replacement, recompute the
// variogram on the original bin edges, take per-bin percentile envelopes and
// widen them to contain the point estimate.
inline VariogramBand bootstrap_variogram_band(const Eigen::VectorXd& residuals, std::span<const Location> locs,
                                              int n_boot, double level, std::uint64_t seed, int n_bins = 15,
                                              double max_lag = 0.0) {
  require(n_boot >= 1, "bootstrap_variogram_band: n_boot must be >= 1");
  require(level > 0.0 && level < 1.0, "bootstrap_variogram_band: level must lie in (0, 1)");
  const auto point = empirical_variogram(residuals, locs, n_bins, max_lag);
  const int n = static_cast<int>(residuals.size());
  std::vector<std::vector<double>> reps(static_cast<std::size_t>(point.bin_count));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> sites(static_cast<std::size_t>(n));
  for (int b = 0; b < n_boot; ++b) {
    for (auto& s : sites) s = pick(rng);
    const auto v = detail::binned_semivariance(residuals, locs, sites, point.bin_count, point.max_lag);
    for (std::size_t k = 0; k < v.size(); ++k) reps[static_cast<std::size_t>(v.bins[k])].push_back(v.gamma[k]);
  }
  VariogramBand band;
  for (std::size_t k = 0; k < point.size(); ++k) {
    auto& r = reps[static_cast<std::size_t>(point.bins[k])];
    double lo = point.gamma[k], hi = point.gamma[k];
    if (!r.empty()) {
      std::sort(r.begin(), r.end());
      lo = std::min(lo, empirical_quantile(r, 0.5 * (1.0 - level)));
      hi = std::max(hi, empirical_quantile(r, 1.0 - 0.5 * (1.0 - level)));
    }
    band.bins.push_back(point.bins[k]);
    band.lower.push_back(lo);
    band.upper.push_back(hi);
  }
  return band;
}

inline void write_variogram_csv(std::ostream& out, const EmpiricalVariogram& emp, const VariogramBand& band,
                                const VariogramModel& model) {
  out << "lag,gamma_hat,pairs,lower,upper,gamma_model\n";
  for (std::size_t k = 0; k < emp.size(); ++k) {
    out << format_double(emp.lags[k]) << ',' << format_double(emp.gamma[k]) << ',' << emp.pairs[k] << ','
        << format_double(band.lower[k]) << ',' << format_double(band.upper[k]) << ','
        << format_double(model(emp.lags[k])) << '\n';
  }
}

// Ordinary kriging in covariance form: C_ij = sigma2 exp(-phi d_ij) + tau2 [i == j];
// the nugget is treated as measurement error and left out of the target
// covariances. The training system is factored once.
class OrdinaryKriging {
 public:
  OrdinaryKriging(const Eigen::VectorXd& residuals, std::vector<Location> locs, const VariogramModel& model)
      : locs_(std::move(locs)), model_(model) {
    require(residuals.size() == static_cast<Eigen::Index>(locs_.size()), "ordinary_krige: size mismatch");
    require(residuals.size() >= 2, "ordinary_krige: need at least two training sites");
    require(model.nugget >= 0.0 && model.partial_sill >= 0.0 && model.phi > 0.0, "ordinary_krige: invalid model");
    const auto cov = model.covariance();
    const double scale = model.partial_sill > 0.0 ? model.partial_sill : model.nugget;
    auto [llt, jitter] = detail::llt_with_jitter(covariance_matrix(locs_, cov), scale);
    llt_ = std::move(llt);
    const Eigen::Index n = residuals.size();
    cinv_one_ = llt_.solve(Eigen::VectorXd::Ones(n));
    one_cinv_one_ = cinv_one_.sum();
    mean_ = cinv_one_.dot(residuals) / one_cinv_one_;
    cinv_centered_ = llt_.solve((residuals.array() - mean_).matrix());
  }

  // Weights summing to one for a target site.
  Eigen::VectorXd weights(const Location& target) const {
    const Eigen::VectorXd c = cross(target);
    const Eigen::VectorXd cinv_c = llt_.solve(c);
    return cinv_c + cinv_one_ * ((1.0 - cinv_c.sum()) / one_cinv_one_);
  }

  double predict(const Location& target) const { return mean_ + cross(target).dot(cinv_centered_); }

  Eigen::VectorXd predict(std::span<const Location> targets) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t k = 0; k < targets.size(); ++k) out[static_cast<Eigen::Index>(k)] = predict(targets[k]);
    return out;
  }

 private:
  Eigen::VectorXd cross(const Location& target) const {
    Eigen::VectorXd c(static_cast<Eigen::Index>(locs_.size()));
    for (std::size_t i = 0; i < locs_.size(); ++i) {
      c[static_cast<Eigen::Index>(i)] = model_.partial_sill * std::exp(-model_.phi * distance(locs_[i], target));
    }
    return c;
  }

  std::vector<Location> locs_;
  VariogramModel model_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd cinv_one_;
  double one_cinv_one_ = 0.0;
  double mean_ = 0.0;
  Eigen::VectorXd cinv_centered_;
};

inline Eigen::VectorXd ordinary_krige(const Eigen::VectorXd& residuals, std::span<const Location> locs,
                                      const VariogramModel& model, std::span<const Location> targets) {
  return OrdinaryKriging(residuals, {locs.begin(), locs.end()}, model).predict(targets);
}

// ---------------------------------------------------------------------------
// Likelihood route

// Gaussian profile likelihood of an exponential-plus-nugget model with a
// constant mean. Sigma = s2 * ((1 - nu) exp(-phi D) + nu I); s2 and the mean
// are profiled out, (log phi, nu) searched on a grid then refined by a bounded
// Nelder-Mead. phi is bounded to [1e-2 / max distance, 1 / min positive distance].
inline ExponentialCovariance estimate_covariance_mle(const Eigen::VectorXd& residuals, std::span<const Location> locs) {
  const Eigen::Index n = residuals.size();
  require(n == static_cast<Eigen::Index>(locs.size()) && n >= 3, "estimate_covariance_mle: need >= 3 sites");
  const Eigen::MatrixXd d = pairwise_distances(locs);
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      if (d(i, j) > 0.0) dmin = std::min(dmin, d(i, j));
      dmax = std::max(dmax, d(i, j));
    }
  }
  require(dmax > 0.0, "estimate_covariance_mle: all sites coincide");
  const double lphi_lo = std::log(1e-2 / dmax), lphi_hi = std::log(1.0 / dmin);
  const double nu_hi = 0.99;

  struct Eval {
    double neg2ll;
    double s2;
  };
  auto evaluate = [&](double log_phi, double nu) -> Eval {
    const double phi = std::exp(log_phi);
    Eigen::MatrixXd r = ((-phi) * d.array()).exp().matrix() * (1.0 - nu);
    r.diagonal().array() += nu;
    try {
      auto [llt, jitter] = detail::llt_with_jitter(r, 1.0);
      const Eigen::VectorXd one_s = llt.solve(Eigen::VectorXd::Ones(n));
      const double mu = one_s.dot(residuals) / one_s.sum();
      const Eigen::VectorXd e = residuals.array() - mu;
      const double quad = e.dot(llt.solve(e));
      const double s2 = quad / static_cast<double>(n);
      const Eigen::MatrixXd l = llt.matrixL();
      const double logdet = 2.0 * l.diagonal().array().log().sum();
      return {static_cast<double>(n) * std::log(s2) + logdet, s2};
    } catch (const numeric_error&) {
      return {std::numeric_limits<double>::infinity(), 0.0};
    }
  };

  double best_lphi = lphi_lo, best_nu = 0.5, best_val = std::numeric_limits<double>::infinity();
  const int gphi = 14, gnu = 6;
  for (int i = 0; i <= gphi; ++i) {
    const double lphi = lphi_lo + (lphi_hi - lphi_lo) * i / gphi;
    for (int k = 0; k < gnu; ++k) {
      const double nu = nu_hi * k / (gnu - 1);
      const double v = evaluate(lphi, nu).neg2ll;
      if (v < best_val) {
        best_val = v;
        best_lphi = lphi;
        best_nu = nu;
      }
    }
  }
  const auto refined = nelder_mead_box(
      [&](const std::vector<double>& p) { return evaluate(p[0], p[1]).neg2ll; }, {best_lphi, best_nu},
      {lphi_lo, 0.0}, {lphi_hi, nu_hi}, {0.3 * (lphi_hi - lphi_lo) / gphi, 0.1}, 120, 1e-9);
  if (refined.value < best_val) {
    best_lphi = refined.x[0];
    best_nu = refined.x[1];
  }
  const auto e = evaluate(best_lphi, best_nu);
  if (!std::isfinite(e.neg2ll)) throw numeric_error("estimate_covariance_mle: likelihood is not finite");
  return {e.s2 * (1.0 - best_nu), std::exp(best_lphi), e.s2 * best_nu};
}

}  // namespace ssirus
