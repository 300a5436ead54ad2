#pragma once

#include <algorithm>
#include <tuple>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/forest.hpp"
#include "ssirus/log.hpp"
#include "ssirus/pipeline.hpp"
#include "ssirus/rules.hpp"

namespace ssirus {

struct CvSettings {
  int folds = 10;
  int repetitions = 10;
  int trees_per_fold = 1000;
  double target_stability = 0.9;
  std::uint64_t seed = 1;
  std::optional<std::vector<double>> grid;  // overrides the data-driven grid
};

struct CvCurvePoint {
  double p0 = 0.0;
  double mean_rules = 0.0;
  double mean_unexplained_variance = 0.0;
  double mean_stability = 0.0;
  double sd_unexplained_variance = 0.0;
  double sd_stability = 0.0;
};

struct CvResult {
  std::vector<CvCurvePoint> curve;
  std::vector<double> optima;  // one per repetition
  double p0 = 0.0;
  int folds = 0;
  int repetitions = 0;
};

// Thresholds just below each of the top distinct frequencies, so grid point k
// selects the paths of the k most frequent distinct frequency levels. Points
// selecting more than max_rules paths are dropped. Ascending.
inline std::vector<double> p0_grid(const RuleFrequencyTable& table, std::size_t cap = max_rules) {
  require(!table.counts.empty() && table.trees > 0, "p0_grid: empty frequency table");
  std::vector<int> levels;
  for (const auto& [p, c] : table.counts) levels.push_back(c);
  std::sort(levels.begin(), levels.end(), std::greater<>());
  std::vector<std::pair<int, std::size_t>> distinct;  // count level, paths at or above it
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i + 1 == levels.size() || levels[i + 1] != levels[i]) distinct.emplace_back(levels[i], i + 1);
  }
  int gap = distinct.back().first;
  for (std::size_t i = 1; i < distinct.size(); ++i) gap = std::min(gap, distinct[i - 1].first - distinct[i].first);
  std::vector<double> grid;
  for (const auto& [level, selected] : distinct) {
    if (selected > cap) break;
    grid.push_back((level - 0.5 * gap) / static_cast<double>(table.trees));
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

// Lower-middle element of the sorted optima.
inline double select_p0(std::vector<double> optima) {
  require(!optima.empty(), "select_p0: no optima");
  std::sort(optima.begin(), optima.end());
  return optima[(optima.size() - 1) / 2];
}

// Index minimizing the Euclidean distance to (0 error, target stability) after
// min-max scaling each axis over the candidates; ties go to the larger p0.
inline std::size_t closest_to_ideal(const std::vector<double>& p0, const std::vector<double>& error,
                                    const std::vector<double>& stability, double target) {
  require(!p0.empty() && p0.size() == error.size() && p0.size() == stability.size(), "closest_to_ideal: bad input");
  std::vector<double> dev(stability.size());
  for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = std::abs(stability[i] - target);
  auto scaler = [](const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : v) {
      if (std::isfinite(x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    const double range = hi > lo ? hi - lo : 1.0;
    return std::pair{lo, range};
  };
  const double erange = scaler(error).second;
  const double drange = scaler(dev).second;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (!std::isfinite(error[i])) continue;
    // the scaled ideal point is the image of (0, 0), so offsets cancel
    const double d = std::hypot(error[i] / erange, dev[i] / drange);
    if (d < best_d || (d <= best_d * (1.0 + 1e-12) && p0[i] > p0[best])) {
      best_d = std::min(best_d, d);
      best = i;
    }
  }
  return best;
}

// A path with continuous thresholds replaced by their index on the predictor's
// cutpoint grid (discrete thresholds kept as values); folds discretize
// separately, so rules are compared on this key.
using QuantilePath = std::vector<std::tuple<int, double, int>>;

inline QuantilePath quantile_path(const Path& path, const DiscretizationMap& map) {
  QuantilePath key;
  for (const auto& c : path.constraints) {
    const auto& col = map.columns[static_cast<std::size_t>(c.predictor)];
    double level = c.threshold;
    if (col.kind == PredictorKind::continuous && !col.cutpoints.empty()) {
      const auto it = std::lower_bound(col.cutpoints.begin(), col.cutpoints.end(), c.threshold);
      require(it != col.cutpoints.end() && *it == c.threshold, "quantile_path: threshold is not a cutpoint");
      level = static_cast<double>(it - col.cutpoints.begin());
    }
    key.emplace_back(c.predictor, level, static_cast<int>(c.direction));
  }
  std::sort(key.begin(), key.end());
  return key;
}

namespace detail {

struct FoldOutcome {
  std::vector<double> error;                       // per grid point; NaN when the fold is skipped
  std::vector<std::vector<QuantilePath>> retained;  // per grid point
};

// Fits one forest on the fold's training rows and evaluates every grid p0,
// reusing one materialize/filter pass (selection at larger p0 is a prefix).
inline FoldOutcome evaluate_fold(const GeoDataset& train, const GeoDataset& test, const FitConfig& config,
                                 const std::vector<double>& grid, int trees, std::uint64_t seed) {
  FoldOutcome out;
  out.error.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  out.retained.assign(grid.size(), {});
  const auto map = fit_discretization(train, config.q);
  const GeoDataset binned = apply_discretization(train, map);
  FitConfig local = config;
  local.seed = seed;
  std::optional<CovarianceFactor> factor;
  if (config.mode == ForestMode::gls) {
    require(config.covariance.has_value(), "cross_validate: gls folds need a resolved covariance");
    factor = build_factor(binned.locations, *config.covariance);
  }
  const ForestContext ctx(binned, forest_params(local, binned.predictors()), factor ? &*factor : nullptr);
  const auto forest = grow_trees(ctx, 0, static_cast<std::size_t>(trees), 1);
  const auto table = extract_paths(std::span<const Tree>(forest));

  const double lowest = grid.front();
  const auto all_rules = filter_linear_dependence(materialize_rules(select_rules(table, lowest), binned), binned);
  const bool skip = population_variance(test.y) <= 0.0;
  if (skip) log_warning("cross_validate: held-out fold with zero response variance skipped");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<Rule> rules;
    std::vector<double> freq;
    for (const auto& r : all_rules) {
      if (table.frequency(r.path) > grid[g]) {
        rules.push_back(r);
        freq.push_back(table.frequency(r.path));
        out.retained[g].push_back(quantile_path(r.path, map));
      }
    }
    if (skip) continue;
    const auto model = fit_aggregation(rules, freq, binned, config.aggregation);
    out.error[g] = unexplained_variance(test.y, predict_large_scale(model, test, map));
  }
  return out;
}

inline double mean_sd(const std::vector<double>& v, double* sd) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  const double m = n ? s / n : std::numeric_limits<double>::quiet_NaN();
  if (sd) {
    double ss = 0.0;
    for (double x : v) {
      if (std::isfinite(x)) ss += (x - m) * (x - m);
    }
    *sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  return m;
}

}  // namespace detail

// Repeated K-fold CV over a p0 grid. Each (repetition, fold) grows one forest
// with a fixed tree budget; stability is the mean Dice index over fold pairs of
// the retained rule sets, keyed by quantile_path. gls configs must carry a covariance (see
// resolve_covariance); it is reused in every fold.
inline CvResult cross_validate(const GeoDataset& train, const FitConfig& config, const CvSettings& settings) {
  config.validate();
  const int n = static_cast<int>(train.rows());
  require(settings.folds >= 2 && settings.repetitions >= 1, "cross_validate: need K >= 2 and at least one repetition");
  require(n >= 2 * settings.folds, "cross_validate: need n >= 2K");
  require(settings.trees_per_fold >= 1, "cross_validate: trees_per_fold must be >= 1");
  require(config.mode == ForestMode::ols || config.covariance.has_value(),
          "cross_validate: gls mode needs a resolved covariance");

  std::vector<double> grid;
  if (settings.grid) {
    grid = *settings.grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (double p : grid) require(p > 0.0 && p < 1.0, "cross_validate: grid values must lie in (0, 1)");
  } else {
    const auto map = fit_discretization(train, config.q);
    const GeoDataset binned = apply_discretization(train, map);
    std::optional<CovarianceFactor> factor;
    if (config.mode == ForestMode::gls) factor = build_factor(binned.locations, *config.covariance);
    FitConfig pre = config;
    pre.seed = derive_seed(settings.seed, 0x67726964ULL);
    const ForestContext ctx(binned, forest_params(pre, binned.predictors()), factor ? &*factor : nullptr);
    const auto trees = grow_trees(ctx, 0, static_cast<std::size_t>(settings.trees_per_fold), config.threads);
    grid = p0_grid(extract_paths(std::span<const Tree>(trees)));
  }
  require(!grid.empty(), "cross_validate: empty p0 grid");

  const int k = settings.folds, reps = settings.repetitions;
  std::vector<std::vector<int>> fold_of(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto perm = seeded_permutation(n, derive_seed(settings.seed, 0x70617274ULL, static_cast<std::uint64_t>(r)));
    fold_of[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) fold_of[static_cast<std::size_t>(r)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % k;
  }

  std::vector<detail::FoldOutcome> outcomes(static_cast<std::size_t>(reps * k));
  parallel_for(outcomes.size(), config.threads, [&](std::size_t job) {
    const int r = static_cast<int>(job) / k, f = static_cast<int>(job) % k;
    std::vector<int> tr, te;
    for (int i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    outcomes[job] = detail::evaluate_fold(subset(train, tr), subset(train, te), config, grid, settings.trees_per_fold,
                                          derive_seed(settings.seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(f)));
  });

  CvResult result;
  result.folds = k;
  result.repetitions = reps;
  const std::size_t g_count = grid.size();
  std::vector<std::vector<double>> rep_error(g_count), rep_stab(g_count), rep_rules(g_count);
  for (int r = 0; r < reps; ++r) {
    std::vector<double> err(g_count), stab(g_count);
    for (std::size_t g = 0; g < g_count; ++g) {
      std::vector<double> fe;
      double rules = 0.0, dice = 0.0;
      int pairs = 0;
      for (int f = 0; f < k; ++f) {
        const auto& o = outcomes[static_cast<std::size_t>(r * k + f)];
        fe.push_back(o.error[g]);
        rules += static_cast<double>(o.retained[g].size());
        for (int h = f + 1; h < k; ++h) {
          dice += dice_sorensen(o.retained[g], outcomes[static_cast<std::size_t>(r * k + h)].retained[g]);
          ++pairs;
        }
      }
      err[g] = detail::mean_sd(fe, nullptr);
      stab[g] = dice / pairs;
      rep_error[g].push_back(err[g]);
      rep_stab[g].push_back(stab[g]);
      rep_rules[g].push_back(rules / k);
    }
    result.optima.push_back(grid[closest_to_ideal(grid, err, stab, settings.target_stability)]);
  }
  for (std::size_t g = 0; g < g_count; ++g) {
    CvCurvePoint pt;
    pt.p0 = grid[g];
    pt.mean_rules = detail::mean_sd(rep_rules[g], nullptr);
    pt.mean_unexplained_variance = detail::mean_sd(rep_error[g], &pt.sd_unexplained_variance);
    pt.mean_stability = detail::mean_sd(rep_stab[g], &pt.sd_stability);
    result.curve.push_back(pt);
  }
  result.p0 = select_p0(result.optima);
  return result;
}

inline const CvCurvePoint& curve_point(const CvResult& cv, double p0) {
  for (const auto& pt : cv.curve) {
    if (pt.p0 == p0) return pt;
  }
  throw input_error("curve_point: p0 not on the grid");
}

inline void write_cv_curve(std::ostream& out, const CvResult& cv) {
  out << "p0,mean_rules,mean_unexplained_variance,mean_stability,sd_unexplained_variance,sd_stability\n";
  for (const auto& pt : cv.curve) {
    out << format_double(pt.p0) << ',' << format_double(pt.mean_rules) << ','
        << format_double(pt.mean_unexplained_variance) << ',' << format_double(pt.mean_stability) << ','
        << format_double(pt.sd_unexplained_variance) << ',' << format_double(pt.sd_stability) << '\n';
  }
}

}  // namespace ssirus
