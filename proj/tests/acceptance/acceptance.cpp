// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: acceptance [--work-dir DIR] [--only 1,3,...] [--reuse]
//   --reuse  reads benchmark cells already under DIR/benchmark instead of rerunning them

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssirus/ssirus.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ssirus;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path work_dir = "acceptance_work";
  std::set<int> only;
  bool reuse = false;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. identity covariance: gls pipeline equals ols pipeline
Outcome gls_ols_equivalence(const Options&) {
  int agree = 0;
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto ds = fixtures::random_dataset(200, 6, 1000 + s);
    FitConfig c;
    c.trees = 500;
    c.p0 = 0.03;
    c.seed = s;
    const auto ols = sirus_fit(ds, c);
    c.covariance = ExponentialCovariance{0.0, 1.0 / 50.0, 1.0};
    const auto gls = s_sirus_fit(ds, c);
    bool same = ols.table.counts == gls.table.counts && ols.table.trees == gls.table.trees &&
                ols.model.rules.size() == gls.model.rules.size();
    for (std::size_t k = 0; same && k < ols.model.rules.size(); ++k) {
      same = ols.model.rules[k].path == gls.model.rules[k].path;
      const double d = std::abs(ols.model.weights[k] - gls.model.weights[k]);
      worst = std::max(worst, d);
      same = same && d <= 1e-8;
    }
    agree += same ? 1 : 0;
  }
  return {agree == 20, fmt("%d/20 datasets identical, max weight gap %.2e", agree, worst)};
}

// 2. scenario variances from var_f = 0.0864, to 4 dp
Outcome table_derivation(const Options&) {
  const double omega[3] = {0.1728, 0.0864, 0.0432}, eps[3] = {0.0173, 0.0086, 0.0043};
  const char labels[3] = {'A', 'B', 'C'};
  bool ok = true;
  std::string d;
  for (int k = 0; k < 3; ++k) {
    const auto s = make_scenario(labels[k], 0.0864);
    const double o4 = std::round(s.sigma2_omega * 1e4) / 1e4, e4 = std::round(s.sigma2_eps * 1e4) / 1e4;
    ok = ok && std::abs(o4 - omega[k]) < 1e-12 && std::abs(e4 - eps[k]) < 1e-12;
    d += fmt("%c: %.4f/%.4f ", labels[k], o4, e4);
  }
  return {ok, d};
}

ExperimentConfig benchmark_config(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.fit.trees = 2000;
  cfg.threads = 1;
  cfg.output_dir = dir.string();
  return cfg;
}

const std::vector<CellResult>& benchmark(const Options& opt) {
  static std::vector<CellResult> cells;
  if (!cells.empty()) return cells;
  const auto dir = opt.work_dir / "benchmark";
  if (opt.reuse && fs::exists(dir)) {
    cells = collect_results(dir);
    if (cells.size() == 30) return cells;
    cells.clear();
  }
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  cells = run_experiment(benchmark_config(dir));
  const double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  std::printf("  benchmark: 30 cells in %.1f min\n", mins);
  return cells;
}

using Metric = std::function<double(const CellResult&)>;

std::vector<double> metric(const std::vector<CellResult>& cells, char label, const Metric& m) {
  std::vector<double> v;
  for (const auto& c : cells) {
    if (c.ok && c.label == label) v.push_back(m(c));
  }
  return v;
}

// 3. unexplained-variance ordering across models and scenarios
Outcome table_ordering(const Options& opt) {
  const auto& cells = benchmark(opt);
  const std::vector<std::pair<std::string, Metric>> models{
      {"SIRUS", [](const CellResult& c) { return c.sirus.unexplained_variance; }},
      {"S-SIRUS", [](const CellResult& c) { return c.ssirus.unexplained_variance; }},
      {"SIRUS-RK", [](const CellResult& c) { return c.sirus.unexplained_variance_rk; }},
      {"S-SIRUS-RK", [](const CellResult& c) { return c.ssirus.unexplained_variance_rk; }}};
  std::printf("%s", summary_markdown(cells).c_str());
  bool ok = true;
  int checks = 0, passed = 0;
  auto check = [&](const std::string& name, const std::vector<double>& lhs, const std::vector<double>& rhs) {
    int wins = 0;
    for (std::size_t s = 0; s < std::min(lhs.size(), rhs.size()); ++s) wins += lhs[s] < rhs[s] ? 1 : 0;
    const bool med = median_of(lhs) < median_of(rhs);
    const bool good = med && wins >= 8 && lhs.size() == 10 && rhs.size() == 10;
    std::printf("  %-34s median %.3f < %.3f  seeds %2d/10  %s\n", name.c_str(), median_of(lhs), median_of(rhs), wins,
                good ? "ok" : "MISS");
    ++checks;
    passed += good ? 1 : 0;
    ok = ok && good;
  };
  // model pairs within each scenario: {better, worse}
  const std::vector<std::pair<int, int>> pairs{{1, 0}, {3, 2}, {2, 0}, {3, 1}};
  for (char l : {'A', 'B', 'C'}) {
    for (const auto& [b, w] : pairs) {
      check(std::string(1, l) + ": " + models[b].first + " < " + models[w].first, metric(cells, l, models[b].second),
            metric(cells, l, models[w].second));
    }
  }
  for (const auto& [name, m] : models) {
    check(name + ": B < A", metric(cells, 'B', m), metric(cells, 'A', m));
    check(name + ": C < B", metric(cells, 'C', m), metric(cells, 'B', m));
  }
  return {ok, fmt("%d/%d comparisons hold in median and in >= 8/10 seeds", passed, checks)};
}

// 4. scenario A: fewer rules and higher CV stability for the gls forest
Outcome simplicity(const Options& opt) {
  const auto& cells = benchmark(opt);
  int fewer = 0, stabler = 0, total = 0;
  for (const auto& c : cells) {
    if (!c.ok || c.label != 'A') continue;
    ++total;
    fewer += c.ssirus.rules < c.sirus.rules ? 1 : 0;
    stabler += c.ssirus.cv_stability > c.sirus.cv_stability ? 1 : 0;
    std::printf("  seed %2llu: rules %2d vs %2d, cv stability %.3f vs %.3f, p0 %.4f vs %.4f\n",
                static_cast<unsigned long long>(c.seed), c.ssirus.rules, c.sirus.rules, c.ssirus.cv_stability,
                c.sirus.cv_stability, c.ssirus.p0, c.sirus.p0);
  }
  return {total == 10 && fewer >= 7 && stabler >= 7,
          fmt("fewer rules in %d/10 seeds, higher CV stability in %d/10 seeds", fewer, stabler)};
}

// 5. Dice-Sorensen identities and properties
Outcome dice(const Options&) {
  const std::vector<std::string> ab{"a", "b"}, bc{"b", "c"}, cd{"c", "d"};
  bool ok = dice_sorensen(ab, ab) == 1.0 && dice_sorensen(ab, cd) == 0.0 && dice_sorensen(ab, bc) == 0.5;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(0, 8), elem(0, 15);
  int good = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<int> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    for (auto& v : a) v = elem(rng);
    for (auto& v : b) v = elem(rng);
    const double d = dice_sorensen(a, b);
    auto a2 = a, b2 = b;
    a2.push_back(100);
    b2.push_back(100);
    good += d == dice_sorensen(b, a) && d >= 0.0 && d <= 1.0 && dice_sorensen(a, a) == 1.0 &&
                    dice_sorensen(a2, b2) >= d - 1e-15
                ? 1
                : 0;
  }
  return {ok && good == 1000, fmt("identities %s, properties %d/1000", ok ? "hold" : "fail", good)};
}

// 6. materialize_rule against a brute-force filter-and-mean
Outcome rule_semantics(const Options&) {
  const auto raw = fixtures::random_dataset(50, 4, 6);
  const auto ds = apply_discretization(raw, fit_discretization(raw, 10));
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> len(1, 3), col(0, 3), row(0, 49), dir(0, 1);
  int exact = 0, one_sided = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<SplitSpec> cs;
    const int k = len(rng);
    for (int m = 0; m < k; ++m) {
      const int j = col(rng);
      cs.push_back({j, ds.x(row(rng), j), dir(rng) ? SplitDirection::below : SplitDirection::at_or_above});
    }
    const Path path(cs);
    double sin = 0.0, sout = 0.0;
    int nin = 0, nout = 0;
    for (int i = 0; i < 50; ++i) {
      bool inside = true;
      for (const auto& s : cs) {
        const double v = ds.x(i, s.predictor);
        inside = inside && (s.direction == SplitDirection::below ? v < s.threshold : v >= s.threshold);
      }
      (inside ? sin : sout) += ds.y[i];
      ++(inside ? nin : nout);
    }
    const auto r = materialize_rule(path, ds);
    if (nin == 0 || nout == 0) {
      ++one_sided;
      exact += r ? 0 : 1;
      continue;
    }
    exact += r && r->n_then == nin && r->n_else == nout && r->n_then + r->n_else == 50 && r->then_value == sin / nin &&
                     r->else_value == sout / nout
                 ? 1
                 : 0;
  }
  return {exact == 100, fmt("%d/100 exact (%d one-sided paths correctly excluded)", exact, one_sided)};
}

// 7. non-negative ridge against a grid-search oracle
Outcome ridge_oracle(const Options&) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0), coef(-0.8, 1.0);
  std::normal_distribution<double> z(0.0, 0.3);
  double worst = 0.0;
  bool nonneg = true;
  for (int prob = 0; prob < 50; ++prob) {
    const int n = 40;
    Eigen::MatrixXd g(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) g(i, j) = u(rng) < 0.5 ? 1.0 + j : -0.5 * j;
    }
    const Eigen::Vector3d beta(coef(rng), coef(rng), coef(rng));
    Eigen::VectorXd y = g * beta;
    for (int i = 0; i < n; ++i) y[i] += z(rng);
    const double lambda = 0.01;
    const auto fit = fit_nonneg_ridge(g, y, lambda);
    nonneg = nonneg && (fit.weights.array() >= 0.0).all();
    // centered quadratic form: the intercept is profiled out exactly
    const Eigen::RowVectorXd gm = g.colwise().mean();
    const Eigen::MatrixXd gc = g.rowwise() - gm;
    const Eigen::VectorXd yc = y.array() - y.mean();
    const Eigen::Matrix3d h = gc.transpose() * gc / n + lambda * Eigen::Matrix3d::Identity();
    const Eigen::Vector3d lin = gc.transpose() * yc / n;
    double best = 1e300;
    Eigen::Vector3d arg = Eigen::Vector3d::Zero();
    for (int a = 0; a <= 1500; ++a) {
      for (int b = 0; b <= 1500; ++b) {
        const double b1 = a * 1e-3, b2 = b * 1e-3;
        double b3 = std::max(0.0, (lin[2] - h(2, 0) * b1 - h(2, 1) * b2) / h(2, 2));
        b3 = std::round(b3 * 1e3) * 1e-3;
        const Eigen::Vector3d bv(b1, b2, b3);
        const double v = bv.dot(h * bv) - 2.0 * lin.dot(bv);
        if (v < best) {
          best = v;
          arg = bv;
        }
      }
    }
    worst = std::max(worst, (fit.weights - arg).cwiseAbs().maxCoeff());
  }
  return {nonneg && worst <= 2e-3, fmt("max |w - w_grid| = %.2e over 50 problems, all weights >= 0: %s", worst,
                                        nonneg ? "yes" : "no")};
}

// 8. kriging exactness and unbiasedness
Outcome kriging_exactness(const Options&) {
  const auto sites = fixtures::random_sites(60, 8, 200.0);
  std::mt19937_64 rng(8);
  const Eigen::VectorXd r = standard_normal_vector(60, rng);
  const VariogramModel exact{0.0, 1.0, 1.0 / 50.0};
  const auto at_sites = ordinary_krige(r, sites, exact, sites);
  const double interp = (at_sites - r).cwiseAbs().maxCoeff();
  const OrdinaryKriging ok(r, sites, {0.1, 1.0, 1.0 / 50.0});
  double sum_gap = 0.0;
  for (const auto& t : fixtures::random_sites(100, 9, 250.0)) sum_gap = std::max(sum_gap, std::abs(ok.weights(t).sum() - 1.0));
  return {interp < 1e-8 && sum_gap < 1e-8, fmt("max interpolation error %.2e, max |sum w - 1| %.2e", interp, sum_gap)};
}

// 9. variogram fit recovers generating parameters
Outcome variogram_round_trip(const Options&) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> tau(0.02, 0.5), sig(0.2, 2.0), range(20.0, 120.0);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const VariogramModel truth{tau(rng), sig(rng), 1.0 / range(rng)};
    EmpiricalVariogram emp;
    emp.max_lag = 200.0;
    emp.bin_count = 15;
    for (int k = 0; k < 15; ++k) {
      const double h = (k + 0.5) * 200.0 / 15.0;
      emp.bins.push_back(k);
      emp.lags.push_back(h);
      emp.gamma.push_back(truth(h));
      emp.pairs.push_back(100);
    }
    const auto fit = fit_variogram(emp);
    worst = std::max({worst, std::abs(fit.nugget / truth.nugget - 1.0), std::abs(fit.partial_sill / truth.partial_sill - 1.0),
                      std::abs(fit.phi / truth.phi - 1.0)});
  }
  return {worst <= 0.05, fmt("max relative error %.2e over 20 draws", worst)};
}

// 10. correlation at 150 km with phi = 1/50
Outcome practical_range(const Options&) {
  // a 150 km square: four site pairs at exactly 150 km per replicate
  const std::vector<Location> sq{{0, 0}, {150, 0}, {150, 150}, {0, 150}};
  const auto factor = build_factor(sq, ExponentialCovariance{1.0, 1.0 / 50.0, 0.0});
  const int reps = 5000;
  std::vector<double> a, b;
  for (int r = 0; r < reps; ++r) {
    const auto w = simulate_gp(factor, derive_seed(10, static_cast<std::uint64_t>(r)));
    for (int k = 0; k < 4; ++k) {
      a.push_back(w[k]);
      b.push_back(w[(k + 1) % 4]);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> x(a.data(), static_cast<Eigen::Index>(a.size()));
  const Eigen::Map<const Eigen::VectorXd> y(b.data(), static_cast<Eigen::Index>(b.size()));
  const Eigen::VectorXd xc = x.array() - x.mean(), yc = y.array() - y.mean();
  const double rho = xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
  return {std::abs(rho - 0.05) <= 0.02, fmt("empirical correlation %.4f (model %.4f)", rho, std::exp(-3.0))};
}

// 11. scenario B cell: metrics.json identical across thread counts
Outcome determinism(const Options& opt) {
  std::string first;
  std::string d;
  bool same = true;
  for (unsigned threads : {1u, 4u}) {
    const auto dir = opt.work_dir / ("determinism_t" + std::to_string(threads));
    fs::remove_all(dir);
    auto cfg = benchmark_config(dir);
    cfg.threads = threads;
    const auto cell = run_cell('B', 1, cfg);
    if (!cell.ok) return {false, "cell failed: " + cell.error};
    const auto text = read_file(cell_directory(dir, 'B', 1) / "metrics.json");
    if (first.empty()) {
      first = text;
    } else {
      same = text == first;
    }
  }
  return {same, fmt("metrics.json (%zu bytes) %s for 1 and 4 threads", first.size(), same ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      opt.work_dir = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) opt.only.insert(std::stoi(tok));
    } else if (a == "--reuse") {
      opt.reuse = true;
    } else {
      std::fprintf(stderr, "usage: acceptance [--work-dir DIR] [--only 1,3,...] [--reuse]\n");
      return 2;
    }
  }
  fs::create_directories(opt.work_dir);
  set_log_level(LogLevel::warning);

  const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> criteria{
      {"gls/ols oracle equivalence", gls_ols_equivalence},
      {"scenario variance derivation", table_derivation},
      {"unexplained variance ordering", table_ordering},
      {"scenario A simplicity", simplicity},
      {"dice-sorensen identities", dice},
      {"rule semantics oracle", rule_semantics},
      {"non-negative ridge oracle", ridge_oracle},
      {"kriging exactness", kriging_exactness},
      {"variogram round trip", variogram_round_trip},
      {"gp practical range", practical_range},
      {"thread determinism", determinism}};

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!opt.only.empty() && !opt.only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %2d %-30s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
