#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssirus/common.hpp"
#include "ssirus/cv.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/forest.hpp"
#include "ssirus/pipeline.hpp"
#include "ssirus/rules.hpp"
#include "ssirus/simbench.hpp"

namespace ssirus {

inline constexpr int schema_version = 1;

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw input_error(where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw input_error(where + ": unknown key '" + key + "'");
  }
}

inline void check_schema(const json& j, const std::string& where) {
  if (!j.contains("schema_version")) throw input_error(where + ": missing schema_version");
  if (j.at("schema_version") != schema_version) {
    throw input_error(where + ": unsupported schema_version " + j.at("schema_version").dump());
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw input_error(where + ": bad or missing '" + key + "': " + e.what());
  }
}

template <class T>
void read_optional(const json& j, const char* key, T& target, const std::string& where) {
  if (j.contains(key)) target = get<T>(j, key, where);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Covariance and configs

inline json to_json(const ExponentialCovariance& c) { return {{"sigma2", c.sigma2}, {"phi", c.phi}, {"tau2", c.tau2}}; }

inline ExponentialCovariance covariance_from_json(const json& j, const std::string& where = "covariance") {
  detail::reject_unknown_keys(j, {"sigma2", "phi", "tau2"}, where);
  ExponentialCovariance c;
  c.sigma2 = detail::get<double>(j, "sigma2", where);
  c.phi = detail::get<double>(j, "phi", where);
  c.tau2 = detail::get<double>(j, "tau2", where);
  c.validate();
  return c;
}

inline json to_json(const FitConfig& c) {
  json j{{"q", c.q},
         {"increment", c.increment},
         {"p0", c.p0},
         {"alpha", c.alpha},
         {"mtry", c.mtry},
         {"min_leaf", c.min_leaf},
         {"max_depth", c.max_depth},
         {"mode", to_string(c.mode)},
         {"max_trees", c.max_trees},
         {"seed", c.seed},
         {"lambda_count", c.aggregation.lambda_count},
         {"ridge_folds", c.aggregation.cv_folds},
         {"ridge_seed", c.aggregation.seed}};
  if (c.trees) j["trees"] = *c.trees;
  if (c.covariance) j["covariance"] = to_json(*c.covariance);
  return j;
}

// Reads keys present in j over the given defaults.
inline FitConfig fit_config_from_json(const json& j, FitConfig c = {}, const std::string& where = "fit") {
  detail::reject_unknown_keys(j,
                              {"q", "trees", "increment", "p0", "alpha", "mtry", "min_leaf", "max_depth", "mode",
                               "max_trees", "seed", "covariance", "lambda_count", "ridge_folds", "ridge_seed"},
                              where);
  detail::read_optional(j, "q", c.q, where);
  if (j.contains("trees")) {
    if (j["trees"].is_null()) {
      c.trees.reset();
    } else {
      c.trees = detail::get<int>(j, "trees", where);
    }
  }
  detail::read_optional(j, "increment", c.increment, where);
  detail::read_optional(j, "p0", c.p0, where);
  detail::read_optional(j, "alpha", c.alpha, where);
  detail::read_optional(j, "mtry", c.mtry, where);
  detail::read_optional(j, "min_leaf", c.min_leaf, where);
  detail::read_optional(j, "max_depth", c.max_depth, where);
  if (j.contains("mode")) c.mode = parse_mode(detail::get<std::string>(j, "mode", where));
  detail::read_optional(j, "max_trees", c.max_trees, where);
  detail::read_optional(j, "seed", c.seed, where);
  if (j.contains("covariance")) c.covariance = covariance_from_json(j["covariance"], where + ".covariance");
  detail::read_optional(j, "lambda_count", c.aggregation.lambda_count, where);
  detail::read_optional(j, "ridge_folds", c.aggregation.cv_folds, where);
  detail::read_optional(j, "ridge_seed", c.aggregation.seed, where);
  c.validate();
  return c;
}

inline json to_json(const CvSettings& s) {
  json j{{"folds", s.folds},
         {"repetitions", s.repetitions},
         {"trees_per_fold", s.trees_per_fold},
         {"target_stability", s.target_stability},
         {"seed", s.seed}};
  if (s.grid) j["grid"] = *s.grid;
  return j;
}

inline CvSettings cv_settings_from_json(const json& j, CvSettings s = {}, const std::string& where = "cv") {
  detail::reject_unknown_keys(j, {"folds", "repetitions", "trees_per_fold", "target_stability", "seed", "grid"}, where);
  detail::read_optional(j, "folds", s.folds, where);
  detail::read_optional(j, "repetitions", s.repetitions, where);
  detail::read_optional(j, "trees_per_fold", s.trees_per_fold, where);
  detail::read_optional(j, "target_stability", s.target_stability, where);
  detail::read_optional(j, "seed", s.seed, where);
  if (j.contains("grid")) s.grid = detail::get<std::vector<double>>(j, "grid", where);
  require(s.folds >= 2 && s.repetitions >= 1 && s.trees_per_fold >= 1, where + ": invalid CV settings");
  return s;
}

// Batch configuration shared by every CLI command.
struct RunConfig {
  std::optional<char> scenario;  // simulate
  std::uint64_t seed = 1;        // simulate
  ExperimentConfig experiment;
};

inline char parse_label(const std::string& s) {
  require(s.size() == 1, "scenario label must be one of A, B, C");
  scenario_snr(s[0]);
  return s[0];
}

inline RunConfig run_config_from_json(const json& j) {
  const std::string where = "config";
  detail::reject_unknown_keys(j,
                              {"schema_version", "scenario", "seed", "labels", "seeds", "n", "n_train", "fit", "cv",
                               "variogram", "output_dir"},
                              where);
  detail::check_schema(j, where);
  RunConfig rc;
  auto& e = rc.experiment;
  if (j.contains("scenario")) rc.scenario = parse_label(detail::get<std::string>(j, "scenario", where));
  detail::read_optional(j, "seed", rc.seed, where);
  if (j.contains("labels")) {
    e.labels.clear();
    for (const auto& s : detail::get<std::vector<std::string>>(j, "labels", where)) e.labels.push_back(parse_label(s));
  }
  detail::read_optional(j, "seeds", e.seeds, where);
  detail::read_optional(j, "n", e.n, where);
  detail::read_optional(j, "n_train", e.n_train, where);
  require(e.n >= 2 && e.n_train >= 1 && e.n_train < e.n, where + ": need 0 < n_train < n");
  if (j.contains("fit")) e.fit = fit_config_from_json(j["fit"], e.fit, where + ".fit");
  if (j.contains("cv")) e.cv = cv_settings_from_json(j["cv"], e.cv, where + ".cv");
  if (j.contains("variogram")) {
    const auto& v = j["variogram"];
    detail::reject_unknown_keys(v, {"bins", "n_boot", "level"}, where + ".variogram");
    detail::read_optional(v, "bins", e.variogram_bins, where);
    detail::read_optional(v, "n_boot", e.n_boot, where);
    detail::read_optional(v, "level", e.band_level, where);
    require(e.variogram_bins >= 1 && e.n_boot >= 1 && e.band_level > 0.0 && e.band_level < 1.0,
            where + ".variogram: invalid settings");
  }
  detail::read_optional(j, "output_dir", e.output_dir, where);
  return rc;
}

inline RunConfig parse_run_config(const std::string& text) {
  try {
    return run_config_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw input_error(std::string("config: invalid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pipeline

inline json to_json(const DiscretizationMap& map) {
  json cols = json::array();
  for (const auto& c : map.columns) {
    cols.push_back({{"name", c.name},
                    {"kind", c.kind == PredictorKind::continuous ? "continuous" : "discrete"},
                    {"cutpoints", c.cutpoints}});
  }
  return {{"q", map.q}, {"columns", cols}};
}

inline DiscretizationMap discretization_from_json(const json& j) {
  const std::string where = "discretization";
  detail::reject_unknown_keys(j, {"q", "columns"}, where);
  DiscretizationMap map;
  map.q = detail::get<int>(j, "q", where);
  for (const auto& c : j.at("columns")) {
    detail::reject_unknown_keys(c, {"name", "kind", "cutpoints"}, where + ".column");
    ColumnDiscretization col;
    col.name = detail::get<std::string>(c, "name", where);
    const auto kind = detail::get<std::string>(c, "kind", where);
    require(kind == "continuous" || kind == "discrete", where + ": unknown column kind '" + kind + "'");
    col.kind = kind == "continuous" ? PredictorKind::continuous : PredictorKind::discrete;
    col.cutpoints = detail::get<std::vector<double>>(c, "cutpoints", where);
    map.columns.push_back(std::move(col));
  }
  return map;
}

inline json to_json(const Path& path, std::span<const std::string> names) {
  json cs = json::array();
  for (const auto& c : path.constraints) {
    cs.push_back({{"predictor", c.predictor},
                  {"name", names[static_cast<std::size_t>(c.predictor)]},
                  {"threshold", c.threshold},
                  {"direction", c.direction == SplitDirection::below ? "<" : ">="}});
  }
  return cs;
}

inline Path path_from_json(const json& j) {
  std::vector<SplitSpec> cs;
  for (const auto& c : j) {
    detail::reject_unknown_keys(c, {"predictor", "name", "threshold", "direction"}, "rule constraint");
    const auto dir = detail::get<std::string>(c, "direction", "rule constraint");
    require(dir == "<" || dir == ">=", "rule constraint: direction must be '<' or '>='");
    cs.push_back({detail::get<int>(c, "predictor", "rule constraint"), detail::get<double>(c, "threshold", "rule constraint"),
                  dir == "<" ? SplitDirection::below : SplitDirection::at_or_above});
  }
  return Path(std::move(cs));
}

inline json to_json(const FittedPipeline& p) {
  json rules = json::array();
  for (std::size_t k = 0; k < p.model.rules.size(); ++k) {
    const auto& r = p.model.rules[k];
    rules.push_back({{"constraints", to_json(r.path, p.predictor_names)},
                     {"then", r.then_value},
                     {"else", r.else_value},
                     {"n_then", r.n_then},
                     {"n_else", r.n_else},
                     {"weight", p.model.weights[k]},
                     {"frequency", p.model.frequencies[k]},
                     {"text", render_rule(r, p.predictor_names)}});
  }
  json j{{"schema_version", schema_version},
         {"kind", "pipeline"},
         {"config", to_json(p.config)},
         {"trees_grown", p.trees_grown},
         {"stability_trace", p.stability_trace},
         {"predictor_names", p.predictor_names},
         {"discretization", to_json(p.map)},
         {"model",
          {{"intercept", p.model.intercept},
           {"lambda", p.model.lambda},
           {"response_mean", p.model.response_mean},
           {"n", p.model.n},
           {"rules", rules}}}};
  if (p.covariance) j["covariance"] = to_json(*p.covariance);
  return j;
}

namespace detail {

inline FittedPipeline pipeline_from_json_unchecked(const json& j) {
  const std::string where = "pipeline";
  detail::reject_unknown_keys(j,
                              {"schema_version", "kind", "config", "trees_grown", "stability_trace", "predictor_names",
                               "discretization", "model", "covariance"},
                              where);
  detail::check_schema(j, where);
  require(detail::get<std::string>(j, "kind", where) == "pipeline", where + ": not a pipeline document");
  FittedPipeline p;
  p.config = fit_config_from_json(j.at("config"), {}, where + ".config");
  p.trees_grown = detail::get<int>(j, "trees_grown", where);
  p.stability_trace = detail::get<std::vector<double>>(j, "stability_trace", where);
  p.predictor_names = detail::get<std::vector<std::string>>(j, "predictor_names", where);
  p.map = discretization_from_json(j.at("discretization"));
  if (j.contains("covariance")) p.covariance = covariance_from_json(j["covariance"]);
  const auto& m = j.at("model");
  detail::reject_unknown_keys(m, {"intercept", "lambda", "response_mean", "n", "rules"}, where + ".model");
  p.model.intercept = detail::get<double>(m, "intercept", where);
  p.model.lambda = detail::get<double>(m, "lambda", where);
  p.model.response_mean = detail::get<double>(m, "response_mean", where);
  p.model.n = detail::get<int>(m, "n", where);
  for (const auto& r : m.at("rules")) {
    detail::reject_unknown_keys(r, {"constraints", "then", "else", "n_then", "n_else", "weight", "frequency", "text"},
                                where + ".rule");
    Rule rule{path_from_json(r.at("constraints")), detail::get<double>(r, "then", where),
              detail::get<double>(r, "else", where), detail::get<int>(r, "n_then", where),
              detail::get<int>(r, "n_else", where)};
    for (const auto& c : rule.path.constraints) {
      require(c.predictor >= 0 && static_cast<std::size_t>(c.predictor) < p.map.columns.size(),
              where + ": rule predictor out of range");
    }
    p.model.rules.push_back(std::move(rule));
    p.model.weights.push_back(detail::get<double>(r, "weight", where));
    p.model.frequencies.push_back(detail::get<double>(r, "frequency", where));
  }
  require(p.predictor_names.size() == p.map.columns.size(), where + ": predictor names do not match the map");
  return p;
}

}  // namespace detail

inline FittedPipeline pipeline_from_json(const json& j) {
  try {
    return detail::pipeline_from_json_unchecked(j);
  } catch (const json::exception& e) {
    throw input_error(std::string("pipeline: malformed document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Forest (trees as nested split records)

namespace detail {

inline json node_to_json(const Tree& t, int id) {
  const auto& nd = t.nodes[static_cast<std::size_t>(id)];
  if (nd.is_leaf()) return {{"value", nd.value}, {"rows", nd.rows}};
  return {{"predictor", nd.predictor},
          {"threshold", nd.threshold},
          {"rows", nd.rows},
          {"value", nd.value},
          {"below", node_to_json(t, nd.left)},
          {"at_or_above", node_to_json(t, nd.right)}};
}

inline int node_from_json(const json& j, Tree& t, int depth) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.push_back({});
  TreeNode nd;
  nd.depth = depth;
  nd.rows = get<int>(j, "rows", "tree node");
  nd.value = get<double>(j, "value", "tree node");
  if (j.contains("predictor")) {
    nd.predictor = get<int>(j, "predictor", "tree node");
    nd.threshold = get<double>(j, "threshold", "tree node");
    nd.left = node_from_json(j.at("below"), t, depth + 1);
    nd.right = node_from_json(j.at("at_or_above"), t, depth + 1);
  }
  t.nodes[static_cast<std::size_t>(id)] = nd;
  return id;
}

}  // namespace detail

inline json to_json(const Forest& f) {
  json trees = json::array();
  for (const auto& t : f.trees) trees.push_back(detail::node_to_json(t, 0));
  json j{{"schema_version", schema_version},
         {"kind", "forest"},
         {"mode", to_string(f.params.mode)},
         {"mtry", f.params.mtry},
         {"min_leaf", f.params.min_leaf},
         {"max_depth", f.params.max_depth},
         {"seed", f.params.seed},
         {"trees", trees}};
  if (f.covariance) j["covariance"] = to_json(*f.covariance);
  return j;
}

namespace detail {

inline Forest forest_from_json_unchecked(const json& j) {
  const std::string where = "forest";
  detail::reject_unknown_keys(j, {"schema_version", "kind", "mode", "mtry", "min_leaf", "max_depth", "seed", "trees", "covariance"},
                              where);
  detail::check_schema(j, where);
  Forest f;
  f.params.mode = parse_mode(detail::get<std::string>(j, "mode", where));
  f.params.mtry = detail::get<int>(j, "mtry", where);
  f.params.min_leaf = detail::get<int>(j, "min_leaf", where);
  f.params.max_depth = detail::get<int>(j, "max_depth", where);
  f.params.seed = detail::get<std::uint64_t>(j, "seed", where);
  if (j.contains("covariance")) f.covariance = covariance_from_json(j["covariance"]);
  for (const auto& tj : j.at("trees")) {
    Tree t;
    detail::node_from_json(tj, t, 0);
    f.trees.push_back(std::move(t));
  }
  return f;
}

}  // namespace detail

inline Forest forest_from_json(const json& j) {
  try {
    return detail::forest_from_json_unchecked(j);
  } catch (const json::exception& e) {
    throw input_error(std::string("forest: malformed document: ") + e.what());
  }
}

inline json to_json(const CvResult& cv) {
  json curve = json::array();
  for (const auto& pt : cv.curve) {
    curve.push_back({{"p0", pt.p0},
                     {"mean_rules", pt.mean_rules},
                     {"mean_unexplained_variance", pt.mean_unexplained_variance},
                     {"mean_stability", pt.mean_stability},
                     {"sd_unexplained_variance", pt.sd_unexplained_variance},
                     {"sd_stability", pt.sd_stability}});
  }
  return {{"schema_version", schema_version},
          {"kind", "cv_result"},
          {"p0", cv.p0},
          {"optima", cv.optima},
          {"folds", cv.folds},
          {"repetitions", cv.repetitions},
          {"curve", curve}};
}

}  // namespace ssirus
