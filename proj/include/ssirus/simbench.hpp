#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ssirus/common.hpp"
#include "ssirus/cv.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/geo.hpp"
#include "ssirus/io.hpp"
#include "ssirus/kriging.hpp"
#include "ssirus/log.hpp"
#include "ssirus/pipeline.hpp"
#include "ssirus/predict.hpp"

namespace ssirus {

// f(x) = beta0 + beta1 temp_2m + beta2 surface_pressure + g(Altitude), with the
// centered part rescaled so its sample variance over the generated sites equals
// target_variance (when positive).
struct LargeScaleSpec {
  double beta0 = 4.02051;
  double beta1 = -0.35528;
  double beta2 = 0.59869;
  double target_variance = 0.0864;
  std::string linear1 = "temp_2m";
  std::string linear2 = "surface_pressure";
  std::string smooth = "Altitude";

  static double g(double a) { return -0.45 * a + 0.25 * std::sin(1.8 * a) - 0.15 * a * a; }
};

struct ScenarioSpec {
  char label = 'A';
  double snr = 0.5;
  double phi = 1.0 / 50.0;
  double sigma2_omega = 0.0;
  double sigma2_eps = 0.0;
  int n = 500;
  int n_train = 400;
  std::uint64_t seed = 1;
};

inline double scenario_snr(char label) {
  switch (label) {
    case 'A': return 0.5;
    case 'B': return 1.0;
    case 'C': return 2.0;
    default: throw input_error(std::string("unknown scenario label '") + label + "'");
  }
}

// sigma2_omega = var_f / SNR, sigma2_eps = sigma2_omega / 10, phi = 1/50.
inline ScenarioSpec make_scenario(char label, double var_f) {
  require(var_f > 0.0 && std::isfinite(var_f), "make_scenario: var_f must be positive");
  ScenarioSpec s;
  s.label = label;
  s.snr = scenario_snr(label);
  s.sigma2_omega = var_f / s.snr;
  s.sigma2_eps = s.sigma2_omega / 10.0;
  return s;
}

inline const std::vector<std::string>& simulated_predictor_names() {
  static const std::vector<std::string> names{"Latitude",         "Longitude",        "Altitude",
                                              "blh_layer_max",    "temp_2m",          "rh_mean",
                                              "solar_radiation",  "surface_pressure", "wind_speed_100m_mean",
                                              "nox_sum"};
  return names;
}

inline constexpr double domain_easting_km = 250.0;
inline constexpr double domain_northing_km = 200.0;

namespace detail {

// Smooth random surface: sum of random cosines with wave vectors of scale
// 1/length_km, normalized to unit variance in expectation.
struct SmoothField {
  std::vector<double> wx, wy, phase;

  SmoothField(std::mt19937_64& rng, double length_km, int waves = 24) {
    std::normal_distribution<double> normal(0.0, 1.0 / length_km);
    std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
    for (int m = 0; m < waves; ++m) {
      wx.push_back(normal(rng));
      wy.push_back(normal(rng));
      phase.push_back(uni(rng));
    }
  }

  double operator()(const Location& s) const {
    double v = 0.0;
    for (std::size_t m = 0; m < wx.size(); ++m) v += std::cos(wx[m] * s.easting + wy[m] * s.northing + phase[m]);
    return v * std::sqrt(2.0 / static_cast<double>(wx.size()));
  }
};

}  // namespace detail

// Sites uniform over a 250 km x 200 km rectangle; ten predictors named after
// common air-quality covariates, built from smooth location fields plus noise
// and standardized over the n sites. y is left at zero.
inline GeoDataset generate_covariates(int n, std::uint64_t seed) {
  require(n >= 2, "generate_covariates: need n >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ue(0.0, domain_easting_km), un(0.0, domain_northing_km);
  std::normal_distribution<double> noise(0.0, 1.0);
  GeoDataset ds;
  ds.locations.resize(static_cast<std::size_t>(n));
  for (auto& l : ds.locations) {
    l.easting = ue(rng);
    l.northing = un(rng);
  }
  std::vector<detail::SmoothField> fields;
  for (int k = 0; k < 8; ++k) fields.emplace_back(rng, 40.0 + 15.0 * k);

  ds.predictor_names = simulated_predictor_names();
  ds.predictor_kinds.assign(ds.predictor_names.size(), PredictorKind::continuous);
  ds.x.resize(n, static_cast<Eigen::Index>(ds.predictor_names.size()));
  ds.y = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const auto& s = ds.locations[static_cast<std::size_t>(i)];
    const double north = s.northing / domain_northing_km - 0.5, east = s.easting / domain_easting_km - 0.5;
    const double alt = 1.2 * north + fields[0](s) + 0.2 * noise(rng);
    const double temp = -0.6 * alt + 0.5 * fields[1](s) + 0.3 * noise(rng);
    const double pressure = -0.8 * alt + 0.3 * fields[2](s) + 0.2 * noise(rng);
    const double blh = 0.4 * temp + fields[3](s) + 0.5 * noise(rng);
    const double rh = -0.3 * temp + fields[4](s) + 0.5 * noise(rng);
    const double solar = -0.8 * north + fields[5](s) + 0.5 * noise(rng);
    const double wind = 0.5 * alt + fields[6](s) + 0.5 * noise(rng);
    const double nox = -0.4 * alt + 0.6 * east + fields[7](s) + 0.6 * noise(rng);
    ds.x.row(i) << s.northing, s.easting, alt, blh, temp, rh, solar, pressure, wind, nox;
  }
  return standardize(ds).dataset;
}

inline Eigen::VectorXd large_scale_component(const GeoDataset& ds, const LargeScaleSpec& ls) {
  const Eigen::Index a = ds.column_index(ls.smooth), t = ds.column_index(ls.linear1), p = ds.column_index(ls.linear2);
  Eigen::VectorXd f(ds.rows());
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    f[i] = ls.beta0 + ls.beta1 * ds.x(i, t) + ls.beta2 * ds.x(i, p) + LargeScaleSpec::g(ds.x(i, a));
  }
  if (ls.target_variance > 0.0) {
    const double m = f.mean(), v = sample_variance(f);
    require(v > 0.0, "large_scale_component: constant large-scale signal cannot be calibrated");
    f = (m + (f.array() - m) * std::sqrt(ls.target_variance / v)).matrix();
  }
  return f;
}

struct SimulatedData {
  GeoDataset data;
  Eigen::VectorXd f;
  Eigen::VectorXd omega;
  Eigen::VectorXd eps;
  double var_f = 0.0;
  ScenarioSpec spec;
};

// y = f + omega + eps. Covariates and the standard-normal draws behind omega
// and eps depend only on spec.seed, so scenarios with one seed are paired.
inline SimulatedData generate_data(const ScenarioSpec& spec, const LargeScaleSpec& ls = {}) {
  require(spec.n >= 2, "generate_data: need n >= 2");
  require(spec.sigma2_omega >= 0.0 && spec.sigma2_eps >= 0.0 && spec.phi > 0.0, "generate_data: invalid variances");
  SimulatedData out;
  out.spec = spec;
  out.data = generate_covariates(spec.n, derive_seed(spec.seed, 1));
  out.f = large_scale_component(out.data, ls);
  out.var_f = sample_variance(out.f);
  const auto factor = build_factor(out.data.locations, ExponentialCovariance{1.0, spec.phi, 0.0});
  out.omega = std::sqrt(spec.sigma2_omega) * simulate_gp(factor, derive_seed(spec.seed, 2));
  std::mt19937_64 rng(derive_seed(spec.seed, 3));
  out.eps = std::sqrt(spec.sigma2_eps) * standard_normal_vector(spec.n, rng);
  out.data.y = out.f + out.omega + out.eps;
  return out;
}

// Measures var_f on the seed's covariates and derives the scenario from it.
inline SimulatedData generate_scenario(char label, std::uint64_t seed, int n = 500, int n_train = 400,
                                       const LargeScaleSpec& ls = {}) {
  const auto cov = generate_covariates(n, derive_seed(seed, 1));
  auto spec = make_scenario(label, sample_variance(large_scale_component(cov, ls)));
  spec.n = n;
  spec.n_train = n_train;
  spec.seed = seed;
  return generate_data(spec, ls);
}

inline void write_truth_csv(std::ostream& out, const SimulatedData& sim) {
  out << "id,easting,northing,f,omega,eps,y\n";
  for (Eigen::Index i = 0; i < sim.data.rows(); ++i) {
    const auto& l = sim.data.locations[static_cast<std::size_t>(i)];
    out << i << ',' << format_double(l.easting) << ',' << format_double(l.northing) << ',' << format_double(sim.f[i])
        << ',' << format_double(sim.omega[i]) << ',' << format_double(sim.eps[i]) << ',' << format_double(sim.data.y[i])
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Experiment harness

struct ExperimentConfig {
  std::vector<char> labels{'A', 'B', 'C'};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int n = 500;
  int n_train = 400;
  FitConfig fit;
  CvSettings cv;
  int variogram_bins = 15;
  int n_boot = 200;
  double band_level = 0.95;
  unsigned threads = 1;
  std::string output_dir;  // empty: no files
};

struct ModeMetrics {
  double p0 = 0.0;
  int rules = 0;
  int trees = 0;
  double unexplained_variance = 0.0;
  double unexplained_variance_rk = 0.0;
  double cv_stability = 0.0;
  double cv_unexplained_variance = 0.0;
  double cv_rules = 0.0;
  double final_stability = 0.0;
  std::optional<ExponentialCovariance> covariance;
  VariogramModel variogram;
};

struct CellResult {
  char label = 'A';
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double var_f = 0.0;
  double sigma2_omega = 0.0;
  double sigma2_eps = 0.0;
  ModeMetrics sirus;
  ModeMetrics ssirus;
};

inline nlohmann::json to_json(const ModeMetrics& m) {
  nlohmann::json j{{"p0", m.p0},
                   {"rules", m.rules},
                   {"trees", m.trees},
                   {"unexplained_variance", m.unexplained_variance},
                   {"unexplained_variance_rk", m.unexplained_variance_rk},
                   {"cv_stability", m.cv_stability},
                   {"cv_unexplained_variance", m.cv_unexplained_variance},
                   {"cv_rules", m.cv_rules},
                   {"final_stability", m.final_stability},
                   {"variogram", {{"nugget", m.variogram.nugget}, {"partial_sill", m.variogram.partial_sill},
                                  {"phi", m.variogram.phi}}}};
  if (m.covariance) {
    j["covariance"] = {{"sigma2", m.covariance->sigma2}, {"phi", m.covariance->phi}, {"tau2", m.covariance->tau2}};
  }
  return j;
}

inline ModeMetrics mode_metrics_from_json(const nlohmann::json& j) {
  ModeMetrics m;
  m.p0 = j.at("p0").get<double>();
  m.rules = j.at("rules").get<int>();
  m.trees = j.at("trees").get<int>();
  m.unexplained_variance = j.at("unexplained_variance").get<double>();
  m.unexplained_variance_rk = j.at("unexplained_variance_rk").get<double>();
  m.cv_stability = j.at("cv_stability").get<double>();
  m.cv_unexplained_variance = j.at("cv_unexplained_variance").get<double>();
  m.cv_rules = j.at("cv_rules").get<double>();
  m.final_stability = j.value("final_stability", 0.0);
  const auto& v = j.at("variogram");
  m.variogram = {v.at("nugget").get<double>(), v.at("partial_sill").get<double>(), v.at("phi").get<double>()};
  if (j.contains("covariance")) {
    const auto& c = j["covariance"];
    m.covariance = ExponentialCovariance{c.at("sigma2").get<double>(), c.at("phi").get<double>(), c.at("tau2").get<double>()};
  }
  return m;
}

inline nlohmann::json to_json(const CellResult& c) {
  nlohmann::json j{{"schema_version", 1},
                   {"scenario", std::string(1, c.label)},
                   {"seed", c.seed},
                   {"status", c.ok ? "ok" : "error"}};
  if (!c.ok) {
    j["error"] = c.error;
    return j;
  }
  j["var_f"] = c.var_f;
  j["sigma2_omega"] = c.sigma2_omega;
  j["sigma2_eps"] = c.sigma2_eps;
  j["sirus"] = to_json(c.sirus);
  j["ssirus"] = to_json(c.ssirus);
  return j;
}

inline CellResult cell_from_json(const nlohmann::json& j) {
  CellResult c;
  const auto label = j.at("scenario").get<std::string>();
  require(label.size() == 1, "metrics: bad scenario label");
  c.label = label[0];
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ok = j.at("status").get<std::string>() == "ok";
  if (!c.ok) {
    c.error = j.value("error", std::string());
    return c;
  }
  c.var_f = j.at("var_f").get<double>();
  c.sigma2_omega = j.at("sigma2_omega").get<double>();
  c.sigma2_eps = j.at("sigma2_eps").get<double>();
  c.sirus = mode_metrics_from_json(j.at("sirus"));
  c.ssirus = mode_metrics_from_json(j.at("ssirus"));
  return c;
}

inline std::filesystem::path cell_directory(const std::filesystem::path& root, char label, std::uint64_t seed) {
  return root / (std::string("scenario_") + label) / ("seed_" + std::to_string(seed));
}

// Generate, split, tune p0 by CV, fit, predict with and without residual
// kriging, for both modes. Both modes share the CV partition and forest seeds.
inline CellResult run_cell(char label, std::uint64_t seed, const ExperimentConfig& cfg) {
  CellResult cell;
  cell.label = label;
  cell.seed = seed;
  const auto sim = generate_scenario(label, seed, cfg.n, cfg.n_train);
  cell.var_f = sim.var_f;
  cell.sigma2_omega = sim.spec.sigma2_omega;
  cell.sigma2_eps = sim.spec.sigma2_eps;
  const auto split = random_split(sim.data, cfg.n_train, derive_seed(seed, 4));
  const std::filesystem::path dir = cfg.output_dir.empty() ? std::filesystem::path() : cell_directory(cfg.output_dir, label, seed);

  for (const auto mode : {ForestMode::ols, ForestMode::gls}) {
    const std::string tag = mode == ForestMode::ols ? "sirus" : "ssirus";
    FitConfig fc = cfg.fit;
    fc.mode = mode;
    fc.seed = derive_seed(seed, 6);
    fc.threads = cfg.threads;
    if (mode == ForestMode::ols) fc.covariance.reset();
    fc = resolve_covariance(split.train, fc);
    CvSettings cs = cfg.cv;
    cs.seed = derive_seed(seed, 5);
    const auto cv = cross_validate(split.train, fc, cs);
    fc.p0 = cv.p0;
    const auto fitted = fit_pipeline(split.train, fc);
    const Eigen::VectorXd f_test = predict_large_scale(fitted, split.test);
    const auto rk = fit_residual_kriging(fitted, split.train, cfg.variogram_bins);
    const Eigen::VectorXd w_test = krige_residuals(rk, split.train, split.test);

    ModeMetrics& m = mode == ForestMode::ols ? cell.sirus : cell.ssirus;
    const auto& pt = curve_point(cv, cv.p0);
    m.p0 = cv.p0;
    m.rules = static_cast<int>(fitted.model.rules.size());
    m.trees = fitted.trees_grown;
    m.unexplained_variance = unexplained_variance(split.test.y, f_test);
    m.unexplained_variance_rk = unexplained_variance(split.test.y, f_test + w_test);
    m.cv_stability = pt.mean_stability;
    m.cv_unexplained_variance = pt.mean_unexplained_variance;
    m.cv_rules = pt.mean_rules;
    m.final_stability = fitted.stability_trace.empty() ? 0.0 : fitted.stability_trace.back();
    m.covariance = fitted.covariance;
    m.variogram = rk.model;

    if (!dir.empty()) {
      std::ostringstream rules, curve, vario;
      write_rule_table(rules, fitted.model, fitted.predictor_names);
      write_cv_curve(curve, cv);
      if (rk.variogram) {
        const auto band = bootstrap_variogram_band(rk.residuals, split.train.locations, cfg.n_boot, cfg.band_level,
                                                   derive_seed(seed, 7), cfg.variogram_bins);
        write_variogram_csv(vario, *rk.variogram, band, rk.model);
      } else {
        vario << "lag,gamma_hat,pairs,lower,upper,gamma_model\n";
      }
      write_file_atomic(dir / ("rules_" + tag + ".csv"), rules.str());
      write_file_atomic(dir / ("cv_curve_" + tag + ".csv"), curve.str());
      write_file_atomic(dir / ("variogram_" + tag + ".csv"), vario.str());
    }
  }
  cell.ok = true;
  if (!dir.empty()) write_file_atomic(dir / "metrics.json", to_json(cell).dump(2) + "\n");
  return cell;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline std::string summary_csv(const std::vector<CellResult>& cells) {
  std::ostringstream out;
  out << "scenario,seed,status";
  for (const char* tag : {"sirus", "ssirus"}) {
    for (const char* col : {"p0", "rules", "trees", "unexplained_variance", "unexplained_variance_rk", "cv_stability"}) {
      out << ',' << tag << '_' << col;
    }
  }
  out << '\n';
  auto row = [&](const std::string& scenario, const std::string& seed, const std::string& status,
                 const std::vector<double>& values) {
    out << scenario << ',' << seed << ',' << status;
    for (double v : values) out << ',' << format_double(v);
    out << '\n';
  };
  auto values = [](const CellResult& c) {
    std::vector<double> v;
    for (const auto* m : {&c.sirus, &c.ssirus}) {
      v.insert(v.end(), {m->p0, static_cast<double>(m->rules), static_cast<double>(m->trees), m->unexplained_variance,
                         m->unexplained_variance_rk, m->cv_stability});
    }
    return v;
  };
  std::vector<char> labels;
  for (const auto& c : cells) {
    if (std::find(labels.begin(), labels.end(), c.label) == labels.end()) labels.push_back(c.label);
  }
  std::sort(labels.begin(), labels.end());
  for (char label : labels) {
    std::vector<std::vector<double>> columns;
    for (const auto& c : cells) {
      if (c.label != label) continue;
      if (!c.ok) {
        out << label << ',' << c.seed << ",error" << std::string(12, ',') << '\n';
        continue;
      }
      const auto v = values(c);
      row(std::string(1, label), std::to_string(c.seed), "ok", v);
      if (columns.empty()) columns.resize(v.size());
      for (std::size_t k = 0; k < v.size(); ++k) columns[k].push_back(v[k]);
    }
    if (!columns.empty()) {
      std::vector<double> med;
      for (auto& col : columns) med.push_back(median_of(col));
      row(std::string(1, label), "median", "ok", med);
    }
  }
  return out.str();
}

// Median test unexplained variance per model and scenario.
inline std::string summary_markdown(const std::vector<CellResult>& cells) {
  std::vector<char> labels;
  for (const auto& c : cells) {
    if (c.ok && std::find(labels.begin(), labels.end(), c.label) == labels.end()) labels.push_back(c.label);
  }
  std::sort(labels.begin(), labels.end());
  std::ostringstream out;
  out << "| Model |";
  for (char l : labels) out << " Scenario " << l << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < labels.size(); ++i) out << "---|";
  out << '\n';
  const std::vector<std::pair<std::string, std::function<double(const CellResult&)>>> models{
      {"SIRUS", [](const CellResult& c) { return c.sirus.unexplained_variance; }},
      {"S-SIRUS", [](const CellResult& c) { return c.ssirus.unexplained_variance; }},
      {"SIRUS-RK", [](const CellResult& c) { return c.sirus.unexplained_variance_rk; }},
      {"S-SIRUS-RK", [](const CellResult& c) { return c.ssirus.unexplained_variance_rk; }}};
  for (const auto& [name, get] : models) {
    out << "| " << name << " |";
    for (char l : labels) {
      std::vector<double> v;
      for (const auto& c : cells) {
        if (c.ok && c.label == l) v.push_back(get(c));
      }
      out << ' ' << format_3g(median_of(v)) << " |";
    }
    out << '\n';
  }
  return out.str();
}

// Cells run in (label, seed) order; a failing cell is recorded and the run continues.
inline std::vector<CellResult> run_experiment(const ExperimentConfig& cfg) {
  std::vector<CellResult> cells;
  for (char label : cfg.labels) {
    scenario_snr(label);
    for (auto seed : cfg.seeds) {
      try {
        log_info(std::string("scenario ") + label + " seed " + std::to_string(seed));
        cells.push_back(run_cell(label, seed, cfg));
      } catch (const std::exception& e) {
        CellResult c;
        c.label = label;
        c.seed = seed;
        c.error = e.what();
        log_warning(std::string("scenario ") + label + " seed " + std::to_string(seed) + " failed: " + e.what());
        if (!cfg.output_dir.empty()) {
          write_file_atomic(cell_directory(cfg.output_dir, label, seed) / "metrics.json", to_json(c).dump(2) + "\n");
        }
        cells.push_back(std::move(c));
      }
    }
  }
  if (!cfg.output_dir.empty()) {
    write_file_atomic(std::filesystem::path(cfg.output_dir) / "summary.csv", summary_csv(cells));
    write_file_atomic(std::filesystem::path(cfg.output_dir) / "summary.md", summary_markdown(cells));
  }
  return cells;
}

// Rebuilds the summaries from every scenario_*/seed_*/metrics.json under root.
inline std::vector<CellResult> collect_results(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw input_error("report: not a directory: " + root.string());
  std::vector<CellResult> cells;
  for (const auto& sdir : std::filesystem::directory_iterator(root)) {
    const auto name = sdir.path().filename().string();
    if (!sdir.is_directory() || name.rfind("scenario_", 0) != 0) continue;
    for (const auto& cdir : std::filesystem::directory_iterator(sdir.path())) {
      const auto metrics = cdir.path() / "metrics.json";
      if (!std::filesystem::exists(metrics)) continue;
      try {
        cells.push_back(cell_from_json(nlohmann::json::parse(read_file(metrics))));
      } catch (const nlohmann::json::exception& e) {
        throw input_error("report: malformed " + metrics.string() + ": " + e.what());
      }
    }
  }
  if (cells.empty()) throw input_error("report: no metrics.json found under " + root.string());
  std::sort(cells.begin(), cells.end(),
            [](const CellResult& a, const CellResult& b) { return std::pair(a.label, a.seed) < std::pair(b.label, b.seed); });
  return cells;
}

}  // namespace ssirus
