#pragma once

#include <optional>

#include <Eigen/Dense>

#include "ssirus/dataset.hpp"
#include "ssirus/kriging.hpp"
#include "ssirus/log.hpp"
#include "ssirus/pipeline.hpp"

namespace ssirus {

struct ResidualKriging {
  Eigen::VectorXd residuals;  // training residuals of the large-scale fit
  std::optional<EmpiricalVariogram> variogram;
  VariogramModel model;
  bool constant = false;  // residuals carry no variation; kriging reduces to their mean
};

// Variogram fitted to training residuals of the rule model.
inline ResidualKriging fit_residual_kriging(const FittedPipeline& pipeline, const GeoDataset& train, int n_bins = 15) {
  ResidualKriging rk;
  rk.residuals = train.y - predict_large_scale(pipeline, train);
  if (population_variance(rk.residuals) <= 1e-24 * (1.0 + rk.residuals.squaredNorm())) {
    rk.constant = true;
    return rk;
  }
  rk.variogram = empirical_variogram(rk.residuals, train.locations, n_bins);
  if (rk.variogram->size() < 3) {
    log_warning("residual kriging: fewer than three variogram bins, using a nugget-only model");
    rk.model = {population_variance(rk.residuals), 0.0, 1.0};
  } else {
    rk.model = fit_variogram(*rk.variogram);
  }
  if (!(rk.model.nugget + rk.model.partial_sill > 0.0)) rk.model.nugget = population_variance(rk.residuals);
  return rk;
}

inline Eigen::VectorXd krige_residuals(const ResidualKriging& rk, const GeoDataset& train, const GeoDataset& test) {
  if (rk.constant) return Eigen::VectorXd::Constant(test.rows(), rk.residuals.size() ? rk.residuals.mean() : 0.0);
  return ordinary_krige(rk.residuals, train.locations, rk.model, test.locations);
}

// y_hat = f_hat(x(s)) + kriged residual at s (the second term only when rk is set).
inline Eigen::VectorXd predict_response(const FittedPipeline& pipeline, const GeoDataset& train, const GeoDataset& test,
                                        bool rk = true) {
  Eigen::VectorXd f = predict_large_scale(pipeline, test);
  if (rk) f += krige_residuals(fit_residual_kriging(pipeline, train), train, test);
  return f;
}

}  // namespace ssirus
