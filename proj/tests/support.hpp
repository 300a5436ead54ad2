#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/dataset.hpp"
#include "ssirus/geo.hpp"

namespace ssirus::fixtures {

// n rows, p standard-normal predictors, sites uniform on [0, extent]^2,
// y = 2 * 1{x0 > 0} + x1 + noise_sd * N(0, 1).
inline GeoDataset random_dataset(int n, int p, std::uint64_t seed, double noise_sd = 0.5, double extent = 200.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, extent);
  GeoDataset ds;
  ds.x.resize(n, p);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.locations.push_back({uni(rng), uni(rng)});
    for (int j = 0; j < p; ++j) ds.x(i, j) = normal(rng);
    ds.y[i] = 2.0 * (ds.x(i, 0) > 0.0) + (p > 1 ? ds.x(i, 1) : 0.0) + noise_sd * normal(rng);
  }
  for (int j = 0; j < p; ++j) ds.predictor_names.push_back("x" + std::to_string(j));
  ds.predictor_kinds.assign(static_cast<std::size_t>(p), PredictorKind::continuous);
  return ds;
}

inline std::vector<Location> random_sites(int n, std::uint64_t seed, double extent = 200.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, extent);
  std::vector<Location> out;
  for (int i = 0; i < n; ++i) out.push_back({uni(rng), uni(rng)});
  return out;
}

}  // namespace ssirus::fixtures
