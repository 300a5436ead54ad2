// Batch entry point: simulate, cv, fit, predict, report, run.
// Exit codes: 0 ok, 2 usage/config/input, 3 numeric, 4 io.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ssirus/ssirus.hpp"

namespace {

using namespace ssirus;

RunConfig load_config(const std::string& path) {
  if (path.empty()) {
    RunConfig rc;
    return rc;
  }
  return parse_run_config(read_file(path));
}

std::string csv_text(const GeoDataset& ds) {
  std::ostringstream out;
  write_dataset_csv(out, ds);
  return out.str();
}

int cmd_simulate(const RunConfig& rc, const std::string& out, const std::string& truth, const std::string& train_out,
                 const std::string& test_out) {
  if (!rc.scenario) throw input_error("config: simulate needs a scenario label (A, B or C)");
  const auto& e = rc.experiment;
  const auto sim = generate_scenario(*rc.scenario, rc.seed, e.n, e.n_train);
  write_file_atomic(out, csv_text(sim.data));
  if (!truth.empty()) {
    std::ostringstream t;
    write_truth_csv(t, sim);
    write_file_atomic(truth, t.str());
  }
  if (!train_out.empty() || !test_out.empty()) {
    const auto split = random_split(sim.data, e.n_train, derive_seed(rc.seed, 4));
    if (!train_out.empty()) write_file_atomic(train_out, csv_text(split.train));
    if (!test_out.empty()) write_file_atomic(test_out, csv_text(split.test));
  }
  std::printf("scenario %c seed %llu: var_f=%.4f sigma2_omega=%.4f sigma2_eps=%.4f\n", *rc.scenario,
              static_cast<unsigned long long>(rc.seed), sim.var_f, sim.spec.sigma2_omega, sim.spec.sigma2_eps);
  return 0;
}

FitConfig mode_config(const RunConfig& rc, const std::string& mode, unsigned threads) {
  FitConfig fc = rc.experiment.fit;
  if (!mode.empty()) fc.mode = parse_mode(mode);
  fc.threads = threads;
  return fc;
}

int cmd_cv(const RunConfig& rc, const std::string& train_path, const std::string& mode, const std::string& out,
           const std::string& json_out, unsigned threads) {
  const auto train = read_dataset_csv(train_path);
  const auto fc = resolve_covariance(train, mode_config(rc, mode, threads));
  const auto cv = cross_validate(train, fc, rc.experiment.cv);
  std::ostringstream curve;
  write_cv_curve(curve, cv);
  write_file_atomic(out, curve.str());
  if (!json_out.empty()) write_file_atomic(json_out, to_json(cv).dump(2) + "\n");
  std::printf("p0 %.17g\n", cv.p0);
  return 0;
}

int cmd_fit(const RunConfig& rc, const std::string& train_path, const std::string& mode, std::optional<double> p0,
            const std::string& out, const std::string& rules_out, unsigned threads) {
  const auto train = read_dataset_csv(train_path);
  auto fc = mode_config(rc, mode, threads);
  if (p0) fc.p0 = *p0;
  const auto fitted = fit_pipeline(train, fc);
  write_file_atomic(out, to_json(fitted).dump(2) + "\n");
  std::ostringstream table;
  write_rule_table(table, fitted.model, fitted.predictor_names);
  if (!rules_out.empty()) write_file_atomic(rules_out, table.str());
  std::cout << table.str();
  return 0;
}

int cmd_predict(const std::string& pipeline_path, const std::string& train_path, const std::string& test_path,
                bool rk, const std::string& out) {
  const auto pipeline = pipeline_from_json(json::parse(read_file(pipeline_path)));
  const auto test = read_dataset_csv(test_path, false);
  Eigen::VectorXd yhat;
  if (rk) {
    require(!train_path.empty(), "predict: --rk needs --train");
    yhat = predict_response(pipeline, read_dataset_csv(train_path), test, true);
  } else {
    yhat = predict_large_scale(pipeline, test);
  }
  std::ostringstream csv;
  csv << "id,easting,northing,y_hat\n";
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const auto& l = test.locations[static_cast<std::size_t>(i)];
    csv << i << ',' << format_double(l.easting) << ',' << format_double(l.northing) << ',' << format_double(yhat[i])
        << '\n';
  }
  write_file_atomic(out, csv.str());
  return 0;
}

int cmd_report(const std::string& dir) {
  const auto cells = collect_results(dir);
  write_file_atomic(std::filesystem::path(dir) / "summary.csv", summary_csv(cells));
  const auto md = summary_markdown(cells);
  write_file_atomic(std::filesystem::path(dir) / "summary.md", md);
  std::cout << md;
  return 0;
}

int cmd_run(RunConfig rc, const std::string& out, unsigned threads) {
  if (!out.empty()) rc.experiment.output_dir = out;
  require(!rc.experiment.output_dir.empty(), "run: an output directory is required (--out or output_dir)");
  rc.experiment.threads = threads;
  const auto cells = run_experiment(rc.experiment);
  std::cout << summary_markdown(cells);
  for (const auto& c : cells) {
    if (!c.ok) return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial rule ensembles: simulate, tune, fit, predict and report"};
  app.require_subcommand(1);
  std::string config_path, log_level = "warning";
  unsigned threads = ssirus::default_thread_count();
  app.add_option("--log-level", log_level, "quiet, warning, info or debug")->check(CLI::IsMember({"quiet", "warning", "info", "debug"}));

  std::string out, truth, train, test, mode, rules_out, json_out, pipeline, results, train_out, test_out;
  std::optional<double> p0;
  bool rk = false;

  auto* sim = app.add_subcommand("simulate", "Generate one scenario dataset");
  sim->add_option("--config", config_path, "JSON run config")->required();
  sim->add_option("--out", out, "Dataset CSV")->required();
  sim->add_option("--truth", truth, "Hidden-component CSV");
  sim->add_option("--train-out", train_out, "Training split CSV");
  sim->add_option("--test-out", test_out, "Test split CSV");

  auto* cv = app.add_subcommand("cv", "Cross-validate p0");
  cv->add_option("--config", config_path, "JSON run config");
  cv->add_option("--train", train, "Training CSV")->required();
  cv->add_option("--mode", mode, "ols or gls")->check(CLI::IsMember({"ols", "gls"}));
  cv->add_option("--out", out, "CV curve CSV")->required();
  cv->add_option("--json", json_out, "CV result JSON");
  cv->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit", "Fit a rule model");
  fit->add_option("--config", config_path, "JSON run config");
  fit->add_option("--train", train, "Training CSV")->required();
  fit->add_option("--mode", mode, "ols or gls")->check(CLI::IsMember({"ols", "gls"}));
  fit->add_option("--p0", p0, "Frequency threshold");
  fit->add_option("--out", out, "Pipeline JSON")->required();
  fit->add_option("--rules", rules_out, "Rule table CSV");
  fit->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* pred = app.add_subcommand("predict", "Predict with a fitted pipeline");
  pred->add_option("--pipeline", pipeline, "Pipeline JSON")->required();
  pred->add_option("--train", train, "Training CSV (needed for --rk)");
  pred->add_option("--test", test, "Target CSV")->required();
  pred->add_flag("--rk", rk, "Add kriged training residuals");
  pred->add_option("--out", out, "Predictions CSV")->required();

  auto* rep = app.add_subcommand("report", "Summarize a results directory");
  rep->add_option("--results", results, "Results directory")->required();

  auto* run = app.add_subcommand("run", "Run the scenario benchmark");
  run->add_option("--config", config_path, "JSON run config");
  run->add_option("--out", out, "Results directory");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  using namespace ssirus;
  set_log_level(log_level == "quiet"  ? LogLevel::quiet
                : log_level == "info" ? LogLevel::info
                : log_level == "debug" ? LogLevel::debug
                                       : LogLevel::warning);
  try {
    if (*sim) return cmd_simulate(load_config(config_path), out, truth, train_out, test_out);
    if (*cv) return cmd_cv(load_config(config_path), train, mode, out, json_out, threads);
    if (*fit) return cmd_fit(load_config(config_path), train, mode, p0, out, rules_out, threads);
    if (*pred) return cmd_predict(pipeline, train, test, rk, out);
    if (*rep) return cmd_report(results);
    if (*run) return cmd_run(load_config(config_path), out, threads);
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
