#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/forest.hpp"
#include "ssirus/geo.hpp"
#include "ssirus/kriging.hpp"
#include "ssirus/log.hpp"
#include "ssirus/rules.hpp"

namespace ssirus {

// 2|A n B| / (|A| + |B|) over distinct elements; two empty sets give 1.
template <class T>
double dice_sorensen(std::span<const T> a, std::span<const T> b) {
  const std::set<T> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& v : sa) common += sb.count(v);
  return 2.0 * static_cast<double>(common) / static_cast<double>(sa.size() + sb.size());
}

template <class T>
double dice_sorensen(const std::vector<T>& a, const std::vector<T>& b) {
  return dice_sorensen(std::span<const T>(a), std::span<const T>(b));
}

struct FitConfig {
  int q = 10;
  std::optional<int> trees;  // fixed B; unset runs the stability-stopping loop
  int increment = 1000;
  double p0 = 0.025;
  double alpha = 0.05;
  int mtry = 0;  // 0 selects max(1, floor(P / 3))
  int min_leaf = 2;
  int max_depth = 2;
  ForestMode mode = ForestMode::ols;
  std::optional<ExponentialCovariance> covariance;  // gls only; unset means estimate
  int max_trees = 50000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  AggregationSettings aggregation;

  void validate() const {
    require(q >= 2, "config: q must be >= 2");
    require(p0 > 0.0 && p0 < 1.0, "config: p0 must lie in (0, 1)");
    require(alpha > 0.0 && alpha < 1.0, "config: alpha must lie in (0, 1)");
    require(increment >= 1, "config: increment b must be >= 1");
    require(!trees || *trees >= 1, "config: B must be >= 1");
    require(mtry >= 0 && min_leaf >= 1 && max_depth >= 1, "config: invalid tree settings");
    require(max_trees >= 1, "config: max_trees must be >= 1");
    if (covariance) covariance->validate();
  }
};

struct FittedPipeline {
  FitConfig config;
  AggregatedRuleModel model;
  DiscretizationMap map;
  std::vector<std::string> predictor_names;
  int trees_grown = 0;
  std::vector<double> stability_trace;
  std::optional<ExponentialCovariance> covariance;
  RuleFrequencyTable table;  // in-memory only
};

// Out-of-bag predictions of an ols forest; rows that are in-bag for every tree
// fall back to the response mean. Bootstrap draws replay grow_tree's stream.
inline Eigen::VectorXd out_of_bag_predictions(const GeoDataset& binned, const ForestParams& params, int tree_count,
                                              unsigned threads = 1) {
  require(params.mode == ForestMode::ols, "out_of_bag_predictions: ols forests only");
  const ForestContext ctx(binned, params, nullptr);
  const auto trees = grow_trees(ctx, 0, static_cast<std::size_t>(tree_count), threads);
  const Eigen::Index n = binned.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXi hits = Eigen::VectorXi::Zero(n);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    std::mt19937_64 rng(tree_seed(params.seed, t));
    const auto counts = counts_from_indices(bootstrap_indices(n, rng), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (counts[i] > 0.0) continue;
      sum[i] += predict_tree(trees[t], binned.x.row(i));
      ++hits[i];
    }
  }
  const double fallback = binned.y.mean();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = hits[i] > 0 ? sum[i] / hits[i] : fallback;
  return out;
}

// Working covariance for gls growth when none is given: Gaussian likelihood of
// out-of-bag residuals from a 200-tree ols forest of moderately deep trees.
inline ExponentialCovariance estimate_working_covariance(const GeoDataset& binned, std::uint64_t seed,
                                                         unsigned threads = 1) {
  ForestParams params;
  params.mode = ForestMode::ols;
  params.mtry = default_mtry(binned.predictors());
  params.min_leaf = 5;
  params.max_depth = 6;
  params.seed = derive_seed(seed, 0x636f76ULL);
  const Eigen::VectorXd resid = binned.y - out_of_bag_predictions(binned, params, 200, threads);
  auto cov = estimate_covariance_mle(resid, binned.locations);
  if (!(cov.sigma2 > 0.0) && !(cov.tau2 > 0.0)) throw numeric_error("estimate_working_covariance: zero residual variance");
  log_info("working covariance: sigma2=" + format_3g(cov.sigma2) + " phi=" + format_3g(cov.phi) +
           " tau2=" + format_3g(cov.tau2));
  return cov;
}

// Fills in the covariance for gls configs that leave it unset.
inline FitConfig resolve_covariance(const GeoDataset& train, FitConfig config) {
  if (config.mode == ForestMode::gls && !config.covariance) {
    const auto map = fit_discretization(train, config.q);
    config.covariance = estimate_working_covariance(apply_discretization(train, map), config.seed, config.threads);
  }
  return config;
}

// Dice index between the rule sets selected at p0 by the even- and odd-indexed
// halves of the forest.
inline double half_forest_stability(const RuleFrequencyTable& even, const RuleFrequencyTable& odd, double p0) {
  if (even.trees == 0 || odd.trees == 0) return 0.0;
  return dice_sorensen(select_rules(even, p0), select_rules(odd, p0));
}

inline ForestParams forest_params(const FitConfig& config, Eigen::Index predictors) {
  ForestParams p;
  p.mode = config.mode;
  p.mtry = config.mtry > 0 ? config.mtry : default_mtry(predictors);
  p.min_leaf = config.min_leaf;
  p.max_depth = config.max_depth;
  p.seed = config.seed;
  return p;
}

// Rules selected at p0 from a frequency table, materialized, filtered and
// aggregated on the binned training rows.
inline AggregatedRuleModel aggregate_rules(const RuleFrequencyTable& table, double p0, const GeoDataset& binned,
                                           const AggregationSettings& settings) {
  const auto paths = select_rules(table, p0);
  const auto kept = filter_linear_dependence(materialize_rules(paths, binned), binned);
  if (kept.empty()) log_warning("no rule passes p0 = " + format_3g(p0) + "; using an intercept-only model");
  std::vector<double> freq;
  for (const auto& r : kept) freq.push_back(table.frequency(r.path));
  return fit_aggregation(kept, freq, binned, settings);
}

// Discretize, grow (fixed B or in increments of b until the half-forest
// stability reaches 1 - alpha), select at p0, filter and aggregate.
inline FittedPipeline fit_pipeline(const GeoDataset& train, FitConfig config) {
  config.validate();
  train.validate();
  FittedPipeline out;
  out.map = fit_discretization(train, config.q);
  const GeoDataset binned = apply_discretization(train, out.map);
  out.predictor_names = binned.predictor_names;

  std::optional<CovarianceFactor> factor;
  if (config.mode == ForestMode::gls) {
    if (!config.covariance) {
      config.covariance = estimate_working_covariance(binned, config.seed, config.threads);
    }
    factor = build_factor(binned.locations, *config.covariance);
    out.covariance = config.covariance;
  }
  const ForestContext ctx(binned, forest_params(config, binned.predictors()), factor ? &*factor : nullptr);

  RuleFrequencyTable even, odd;
  auto grow = [&](std::size_t first, std::size_t count) {
    const auto trees = grow_trees(ctx, first, count, config.threads);
    for (std::size_t k = 0; k < trees.size(); ++k) {
      ((first + k) % 2 == 0 ? even : odd).merge(extract_paths(std::span<const Tree>(&trees[k], 1)));
    }
  };

  if (config.trees) {
    grow(0, static_cast<std::size_t>(*config.trees));
    out.trees_grown = *config.trees;
    out.stability_trace.push_back(half_forest_stability(even, odd, config.p0));
  } else {
    const double target = 1.0 - config.alpha;
    while (true) {
      const int count = std::min(config.increment, config.max_trees - out.trees_grown);
      grow(static_cast<std::size_t>(out.trees_grown), static_cast<std::size_t>(count));
      out.trees_grown += count;
      const double s = half_forest_stability(even, odd, config.p0);
      out.stability_trace.push_back(s);
      log_info("B=" + std::to_string(out.trees_grown) + " stability=" + format_3f(s));
      if (s >= target) break;
      if (out.trees_grown >= config.max_trees) {
        log_warning("stability stopping reached the cap of " + std::to_string(config.max_trees) +
                    " trees at stability " + format_3f(s));
        break;
      }
    }
  }
  out.table = even;
  out.table.merge(odd);
  out.model = aggregate_rules(out.table, config.p0, binned, config.aggregation);
  out.config = config;
  return out;
}

inline FittedPipeline sirus_fit(const GeoDataset& train, FitConfig config) {
  config.mode = ForestMode::ols;
  return fit_pipeline(train, std::move(config));
}

inline FittedPipeline s_sirus_fit(const GeoDataset& train, FitConfig config) {
  config.mode = ForestMode::gls;
  return fit_pipeline(train, std::move(config));
}

inline Eigen::VectorXd predict_large_scale(const FittedPipeline& pipeline, const GeoDataset& rows) {
  return predict_large_scale(pipeline.model, rows, pipeline.map);
}

}  // namespace ssirus
