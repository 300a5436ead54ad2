#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "ssirus/simbench.hpp"

using namespace ssirus;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.labels = {'B'};
  cfg.seeds = {3};
  cfg.n = 90;
  cfg.n_train = 70;
  cfg.fit.trees = 150;
  cfg.fit.aggregation.cv_folds = 4;
  cfg.cv.folds = 3;
  cfg.cv.repetitions = 2;
  cfg.cv.trees_per_fold = 100;
  cfg.n_boot = 20;
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ssirus_simbench_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Scenario, TableValues) {
  const auto a = make_scenario('A', 0.0864), b = make_scenario('B', 0.0864), c = make_scenario('C', 0.0864);
  EXPECT_NEAR(a.sigma2_omega, 0.1728, 5e-5);
  EXPECT_NEAR(a.sigma2_eps, 0.0173, 5e-5);
  EXPECT_NEAR(b.sigma2_omega, 0.0864, 5e-5);
  EXPECT_NEAR(b.sigma2_eps, 0.0086, 5e-5);
  EXPECT_NEAR(c.sigma2_omega, 0.0432, 5e-5);
  EXPECT_NEAR(c.sigma2_eps, 0.0043, 5e-5);
  for (const auto& s : {a, b, c}) EXPECT_EQ(s.phi, 1.0 / 50.0);
  const auto unit = make_scenario('B', 1.0);
  EXPECT_DOUBLE_EQ(unit.sigma2_omega, 1.0);
  EXPECT_DOUBLE_EQ(unit.sigma2_eps, 0.1);
  EXPECT_THROW(make_scenario('D', 1.0), input_error);
  EXPECT_THROW(make_scenario('A', 0.0), input_error);
}

TEST(Covariates, StandardizedDeterministicAndInDomain) {
  const auto a = generate_covariates(500, 7), b = generate_covariates(500, 7), c = generate_covariates(500, 8);
  EXPECT_EQ(a.x, b.x);
  EXPECT_NE(a.x, c.x);
  EXPECT_EQ(a.x.cols(), 10);
  for (Eigen::Index j = 0; j < a.x.cols(); ++j) {
    EXPECT_NEAR(a.x.col(j).mean(), 0.0, 1e-10);
    EXPECT_NEAR(sample_variance(a.x.col(j)), 1.0, 1e-10);
  }
  double dmax = 0.0;
  for (const auto& s : a.locations) {
    EXPECT_GE(s.easting, 0.0);
    EXPECT_LE(s.easting, domain_easting_km);
    EXPECT_GE(s.northing, 0.0);
    EXPECT_LE(s.northing, domain_northing_km);
  }
  for (std::size_t i = 0; i < a.locations.size(); ++i) {
    for (std::size_t j = i + 1; j < a.locations.size(); ++j) dmax = std::max(dmax, distance(a.locations[i], a.locations[j]));
  }
  EXPECT_GE(dmax, 250.0);
  EXPECT_LE(dmax, std::hypot(domain_easting_km, domain_northing_km));
}

TEST(GenerateData, ComponentsAddUp) {
  const auto sim = generate_scenario('A', 4);
  EXPECT_EQ(sim.data.rows(), 500);
  const Eigen::VectorXd sum = sim.f + sim.omega + sim.eps;
  EXPECT_EQ(sim.data.y, sum);
  EXPECT_NEAR(sim.var_f, 0.0864, 1e-12);
  EXPECT_NEAR(sim.spec.sigma2_omega, 0.1728, 1e-12);
}

TEST(GenerateData, ZeroNoiseLeavesLargeScale) {
  ScenarioSpec s;
  s.n = 120;
  s.seed = 5;
  const auto sim = generate_data(s);
  EXPECT_EQ(sim.data.y, sim.f);
  EXPECT_EQ(sim.omega.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GenerateData, DeterministicAndPairedAcrossScenarios) {
  const auto a1 = generate_scenario('A', 9, 150, 120), a2 = generate_scenario('A', 9, 150, 120);
  EXPECT_EQ(a1.data.y, a2.data.y);
  const auto c = generate_scenario('C', 9, 150, 120);
  EXPECT_EQ(a1.data.x, c.data.x);
  EXPECT_EQ(a1.f, c.f);
  // same standard-normal draws scaled by the scenario's standard deviation
  EXPECT_LT((a1.omega / std::sqrt(a1.spec.sigma2_omega) - c.omega / std::sqrt(c.spec.sigma2_omega)).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(GenerateData, SpatialVarianceMatchesTarget) {
  double mean_var = 0.0;
  const int draws = 20;
  for (int s = 0; s < draws; ++s) mean_var += sample_variance(generate_scenario('B', 100 + s, 300, 240).omega);
  mean_var /= draws;
  // a GP with range 50 km on a 250 km domain keeps most, not all, of its variance over one realization
  EXPECT_NEAR(mean_var, 0.0864, 0.2 * 0.0864);
}

TEST(TruthCsv, HeaderAndRows) {
  const auto sim = generate_scenario('C', 2, 20, 15);
  std::ostringstream out;
  write_truth_csv(out, sim);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "id,easting,northing,f,omega,eps,y");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 21);
}

TEST(RunCell, MetricsAreSaneAndFilesWritten) {
  auto cfg = tiny_experiment();
  const auto dir = scratch("cell");
  cfg.output_dir = dir.string();
  const auto cell = run_cell('B', 3, cfg);
  ASSERT_TRUE(cell.ok);
  for (const auto* m : {&cell.sirus, &cell.ssirus}) {
    EXPECT_GT(m->p0, 0.0);
    EXPECT_LE(m->rules, 25);
    EXPECT_EQ(m->trees, 150);
    EXPECT_GT(m->unexplained_variance, 0.0);
    EXPECT_GE(m->cv_stability, 0.0);
    EXPECT_LE(m->cv_stability, 1.0);
  }
  EXPECT_FALSE(cell.sirus.covariance);
  EXPECT_TRUE(cell.ssirus.covariance);
  const auto cdir = cell_directory(dir, 'B', 3);
  for (const char* f : {"metrics.json", "rules_sirus.csv", "rules_ssirus.csv", "cv_curve_sirus.csv", "cv_curve_ssirus.csv",
                        "variogram_sirus.csv", "variogram_ssirus.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(cdir / f)) << f;
  }
  const auto back = cell_from_json(nlohmann::json::parse(read_file(cdir / "metrics.json")));
  EXPECT_EQ(to_json(back).dump(), to_json(cell).dump());
  std::filesystem::remove_all(dir);
}

TEST(RunCell, MetricsIdenticalAcrossThreadCounts) {
  auto cfg = tiny_experiment();
  const auto one = to_json(run_cell('B', 3, cfg)).dump();
  cfg.threads = 3;
  EXPECT_EQ(to_json(run_cell('B', 3, cfg)).dump(), one);
}

TEST(Experiment, SummariesAndCollect) {
  auto cfg = tiny_experiment();
  cfg.labels = {'A', 'C'};
  cfg.seeds = {1, 2};
  const auto dir = scratch("experiment");
  cfg.output_dir = dir.string();
  const auto cells = run_experiment(cfg);
  ASSERT_EQ(cells.size(), 4u);
  const auto csv = read_file(dir / "summary.csv");
  EXPECT_EQ(csv.rfind("scenario,seed,status,sirus_p0", 0), 0u);
  EXPECT_NE(csv.find("A,median,ok"), std::string::npos);
  EXPECT_NE(csv.find("C,median,ok"), std::string::npos);
  const auto md = read_file(dir / "summary.md");
  EXPECT_NE(md.find("| S-SIRUS-RK |"), std::string::npos);
  EXPECT_NE(md.find("Scenario C"), std::string::npos);
  const auto collected = collect_results(dir);
  EXPECT_EQ(summary_csv(collected), csv);
  EXPECT_EQ(summary_markdown(collected), md);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(collect_results(dir), input_error);
}

TEST(Summary, MedianAndFailedCells) {
  EXPECT_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median_of({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median_of({})));
  CellResult bad;
  bad.label = 'A';
  bad.seed = 1;
  bad.error = "boom";
  const auto j = to_json(bad);
  EXPECT_EQ(j["status"], "error");
  EXPECT_FALSE(cell_from_json(j).ok);
  EXPECT_NE(summary_csv({bad}).find("A,1,error"), std::string::npos);
}
