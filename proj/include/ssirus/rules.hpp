#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/forest.hpp"
#include "ssirus/log.hpp"
#include "ssirus/ridge.hpp"

namespace ssirus {

// Constraints from the root to a node, in canonical (sorted) order so that the
// same hyperrectangle reached through different split orders is one path.
struct Path {
  std::vector<SplitSpec> constraints;

  Path() = default;
  explicit Path(std::vector<SplitSpec> c) : constraints(std::move(c)) {
    std::sort(constraints.begin(), constraints.end());
  }

  std::size_t size() const { return constraints.size(); }

  bool contains(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    for (const auto& c : constraints) {
      if (!c.admits(x[c.predictor])) return false;
    }
    return true;
  }

  // Shorter paths first, then lexicographic on the constraints.
  friend bool operator<(const Path& a, const Path& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a.constraints < b.constraints;
  }
  friend bool operator==(const Path&, const Path&) = default;
};

struct RuleFrequencyTable {
  std::map<Path, int> counts;
  int trees = 0;

  double frequency(const Path& p) const {
    const auto it = counts.find(p);
    return it == counts.end() || trees == 0 ? 0.0 : static_cast<double>(it->second) / trees;
  }

  void merge(const RuleFrequencyTable& other) {
    for (const auto& [p, c] : other.counts) counts[p] += c;
    trees += other.trees;
  }
};

// Every node except the root yields one path; a path is counted once per tree.
inline RuleFrequencyTable extract_paths(std::span<const Tree> trees) {
  RuleFrequencyTable table;
  table.trees = static_cast<int>(trees.size());
  for (const auto& tree : trees) {
    std::set<Path> seen;
    std::vector<std::pair<int, std::vector<SplitSpec>>> stack{{0, {}}};
    while (!stack.empty()) {
      auto [id, prefix] = std::move(stack.back());
      stack.pop_back();
      const auto& nd = tree.nodes[static_cast<std::size_t>(id)];
      if (!prefix.empty()) seen.insert(Path(prefix));
      if (nd.is_leaf()) continue;
      auto left = prefix;
      left.push_back({nd.predictor, nd.threshold, SplitDirection::below});
      auto right = std::move(prefix);
      right.push_back({nd.predictor, nd.threshold, SplitDirection::at_or_above});
      stack.emplace_back(nd.left, std::move(left));
      stack.emplace_back(nd.right, std::move(right));
    }
    for (const auto& p : seen) ++table.counts[p];
  }
  return table;
}

inline RuleFrequencyTable extract_paths(const Forest& forest) { return extract_paths(std::span<const Tree>(forest.trees)); }

// Paths with frequency strictly above p0, most frequent first; equal
// frequencies fall back to canonical path order.
inline std::vector<Path> select_rules(const RuleFrequencyTable& table, double p0) {
  require(p0 > 0.0 && p0 < 1.0, "select_rules: p0 must lie in (0, 1)");
  std::vector<std::pair<int, Path>> hits;
  for (const auto& [p, c] : table.counts) {
    if (static_cast<double>(c) / table.trees > p0) hits.emplace_back(c, p);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Path> out;
  out.reserve(hits.size());
  for (auto& h : hits) out.push_back(std::move(h.second));
  return out;
}

struct Rule {
  Path path;
  double then_value = 0.0;
  double else_value = 0.0;
  int n_then = 0;
  int n_else = 0;

  double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return path.contains(x) ? then_value : else_value;
  }
};

// Means of y inside and outside the path's hyperrectangle on the (binned)
// training rows; nullopt when either side is empty.
inline std::optional<Rule> materialize_rule(const Path& path, const GeoDataset& binned) {
  double sin = 0.0, sout = 0.0;
  int nin = 0, nout = 0;
  for (Eigen::Index i = 0; i < binned.rows(); ++i) {
    if (path.contains(binned.x.row(i))) {
      sin += binned.y[i];
      ++nin;
    } else {
      sout += binned.y[i];
      ++nout;
    }
  }
  if (nin == 0 || nout == 0) {
    log_debug("materialize_rule: one-sided path excluded");
    return std::nullopt;
  }
  return Rule{path, sin / nin, sout / nout, nin, nout};
}

inline std::vector<Rule> materialize_rules(std::span<const Path> paths, const GeoDataset& binned) {
  std::vector<Rule> out;
  for (const auto& p : paths) {
    if (auto r = materialize_rule(p, binned)) out.push_back(std::move(*r));
  }
  return out;
}

inline Eigen::VectorXd rule_outputs(const Rule& rule, const Eigen::MatrixXd& x) {
  Eigen::VectorXd v(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v[i] = rule.evaluate(x.row(i));
  return v;
}

inline Eigen::MatrixXd rule_design(std::span<const Rule> rules, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g(x.rows(), static_cast<Eigen::Index>(rules.size()));
  for (std::size_t k = 0; k < rules.size(); ++k) g.col(static_cast<Eigen::Index>(k)) = rule_outputs(rules[k], x);
  return g;
}

inline constexpr double rank_tolerance = 1e-8;
inline constexpr std::size_t max_rules = 25;

inline int numerical_rank(const Eigen::MatrixXd& m) {
  if (m.cols() == 0) return 0;
  // Singular values of the R factor equal those of m.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::Index k = std::min(m.rows(), m.cols());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues();
  if (s.size() == 0 || !(s[0] > 0.0)) return 0;
  return static_cast<int>((s.array() > rank_tolerance * s[0]).count());
}

// Greedy pass in the given (frequency) order: a rule survives only if its
// training output vector raises the rank of [1, kept rules]. Stops once
// `cap` rules are retained.
inline std::vector<Rule> filter_linear_dependence(std::span<const Rule> rules, const GeoDataset& binned,
                                                  std::size_t cap = max_rules) {
  std::vector<Rule> kept;
  Eigen::MatrixXd basis = Eigen::MatrixXd::Ones(binned.rows(), 1);
  for (const auto& rule : rules) {
    if (kept.size() >= cap) break;
    Eigen::MatrixXd trial(basis.rows(), basis.cols() + 1);
    trial << basis, rule_outputs(rule, binned.x);
    if (numerical_rank(trial) == trial.cols()) {
      basis = std::move(trial);
      kept.push_back(rule);
    }
  }
  return kept;
}

// f(x) = intercept + sum_k weight_k * g_k(x)
struct AggregatedRuleModel {
  double intercept = 0.0;
  std::vector<Rule> rules;
  std::vector<double> weights;
  std::vector<double> frequencies;
  double lambda = 0.0;
  double response_mean = 0.0;
  int n = 0;

  // Evaluates on rows that are already discretized and in training column order.
  double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double f = intercept;
    for (std::size_t k = 0; k < rules.size(); ++k) f += weights[k] * rules[k].evaluate(x);
    return f;
  }
};

struct AggregationSettings {
  int lambda_count = 50;
  int cv_folds = 10;
  std::uint64_t seed = 7;
};

inline AggregatedRuleModel fit_aggregation(std::span<const Rule> rules, std::span<const double> frequencies,
                                           const GeoDataset& binned, const AggregationSettings& settings = {}) {
  require(rules.size() == frequencies.size(), "fit_aggregation: one frequency per rule required");
  AggregatedRuleModel model;
  model.response_mean = binned.y.mean();
  model.n = static_cast<int>(binned.rows());
  model.rules.assign(rules.begin(), rules.end());
  model.frequencies.assign(frequencies.begin(), frequencies.end());
  if (rules.empty()) {
    model.intercept = model.response_mean;
    return model;
  }
  const Eigen::MatrixXd g = rule_design(rules, binned.x);
  const auto fit =
      fit_nonneg_ridge_cv(g, binned.y, ridge_lambda_grid(g, settings.lambda_count), settings.cv_folds, settings.seed);
  model.intercept = fit.intercept;
  model.lambda = fit.lambda;
  model.weights.assign(fit.weights.data(), fit.weights.data() + fit.weights.size());
  return model;
}

// Applies the discretization map (by predictor name) before evaluating rules.
inline Eigen::VectorXd predict_large_scale(const AggregatedRuleModel& model, const GeoDataset& rows,
                                           const DiscretizationMap& map) {
  GeoDataset ordered;
  ordered.y = rows.y;
  ordered.x.resize(rows.rows(), static_cast<Eigen::Index>(map.columns.size()));
  for (std::size_t j = 0; j < map.columns.size(); ++j) {
    const Eigen::Index src = rows.column_index(map.columns[j].name);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      ordered.x(i, static_cast<Eigen::Index>(j)) = map.columns[j].map(rows.x(i, src));
    }
  }
  Eigen::VectorXd f(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) f[i] = model.evaluate(ordered.x.row(i));
  return f;
}

// Mean squared error over the population variance of the truth.
inline double unexplained_variance(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
  require(truth.size() == pred.size() && truth.size() >= 2, "unexplained_variance: need two equal-length vectors of size >= 2");
  const double var = population_variance(truth);
  require(var > 0.0, "unexplained_variance: truth has zero variance");
  return (truth - pred).squaredNorm() / static_cast<double>(truth.size()) / var;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string format_3g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string format_3f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string render_path(const Path& path, std::span<const std::string> names) {
  std::string s;
  for (std::size_t k = 0; k < path.constraints.size(); ++k) {
    const auto& c = path.constraints[k];
    if (k > 0) s += " & ";
    s += names[static_cast<std::size_t>(c.predictor)];
    s += c.direction == SplitDirection::below ? " < " : " >= ";
    s += format_3g(c.threshold);
  }
  return s;
}

// "if solar_radiation < 0.66 then 3.72 (n=200) else 4.44 (n=200)"
inline std::string render_rule(const Rule& rule, std::span<const std::string> names) {
  return "if " + render_path(rule.path, names) + " then " + format_3g(rule.then_value) + " (n=" +
         std::to_string(rule.n_then) + ") else " + format_3g(rule.else_value) + " (n=" + std::to_string(rule.n_else) +
         ")";
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_rule_table(std::ostream& out, const AggregatedRuleModel& model, std::span<const std::string> names) {
  out << "# average_response," << format_3g(model.response_mean) << '\n';
  out << "# intercept," << format_3g(model.intercept) << '\n';
  out << "# n," << model.n << '\n';
  out << "weight,rule,frequency\n";
  for (std::size_t k = 0; k < model.rules.size(); ++k) {
    out << format_3g(model.weights[k]) << ',' << csv_quote(render_rule(model.rules[k], names)) << ','
        << format_3f(model.frequencies[k]) << '\n';
  }
}

inline void write_rule_markdown(std::ostream& out, const AggregatedRuleModel& model,
                                std::span<const std::string> names, const std::string& title) {
  out << "**Average response** = " << format_3g(model.response_mean) << " | **Intercept** = "
      << format_3g(model.intercept) << " | **n** = " << model.n << "\n\n";
  out << "| Weight | " << title << " | Frequency |\n|---|---|---|\n";
  for (std::size_t k = 0; k < model.rules.size(); ++k) {
    out << "| " << format_3g(model.weights[k]) << " | " << render_rule(model.rules[k], names) << " | "
        << format_3f(model.frequencies[k]) << " |\n";
  }
}

}  // namespace ssirus
