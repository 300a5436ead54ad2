#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/geo.hpp"

namespace ssirus {

enum class PredictorKind { continuous, discrete };

struct GeoDataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // n x P
  std::vector<Location> locations;
  std::vector<std::string> predictor_names;
  std::vector<PredictorKind> predictor_kinds;

  Eigen::Index rows() const { return y.size(); }
  Eigen::Index predictors() const { return x.cols(); }

  void validate() const {
    require(y.size() >= 2, "dataset: need at least 2 rows");
    require(x.rows() == y.size(), "dataset: predictor rows do not match response length");
    require(static_cast<Eigen::Index>(locations.size()) == y.size(), "dataset: location count does not match rows");
    require(static_cast<Eigen::Index>(predictor_names.size()) == x.cols(), "dataset: predictor name count mismatch");
    require(static_cast<Eigen::Index>(predictor_kinds.size()) == x.cols(), "dataset: predictor kind count mismatch");
    require(y.allFinite() && x.allFinite(), "dataset: non-finite values");
    for (const auto& l : locations) {
      require(std::isfinite(l.easting) && std::isfinite(l.northing), "dataset: non-finite coordinate");
    }
  }

  Eigen::Index column_index(const std::string& name) const {
    const auto it = std::find(predictor_names.begin(), predictor_names.end(), name);
    if (it == predictor_names.end()) throw input_error("dataset: unknown predictor '" + name + "'");
    return static_cast<Eigen::Index>(it - predictor_names.begin());
  }
};

inline GeoDataset subset(const GeoDataset& ds, std::span<const int> rows) {
  GeoDataset out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.y.resize(m);
  out.x.resize(m, ds.x.cols());
  out.locations.reserve(rows.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const int i = rows[static_cast<std::size_t>(r)];
    out.y[r] = ds.y[i];
    out.x.row(r) = ds.x.row(i);
    out.locations.push_back(ds.locations[static_cast<std::size_t>(i)]);
  }
  out.predictor_names = ds.predictor_names;
  out.predictor_kinds = ds.predictor_kinds;
  return out;
}

inline double mean(const Eigen::VectorXd& v) { return v.mean(); }

// Sample variance (n - 1 denominator).
inline double sample_variance(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline double population_variance(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size());
}

struct Standardization {
  GeoDataset dataset;
  std::vector<double> means;
  std::vector<double> sds;
  std::vector<bool> constant;
};

// Centers and scales every column by its sample sd. Constant columns pass
// through unchanged and are flagged.
inline Standardization standardize(const GeoDataset& ds) {
  Standardization s{ds, {}, {}, {}};
  const auto p = ds.x.cols();
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd col = ds.x.col(j);
    const double m = col.mean();
    const double sd = std::sqrt(sample_variance(col));
    const bool is_constant = !(sd > 0.0) || (col.array() == col[0]).all();
    s.means.push_back(m);
    s.sds.push_back(is_constant ? 1.0 : sd);
    s.constant.push_back(is_constant);
    if (!is_constant) s.dataset.x.col(j) = (col.array() - m) / sd;
  }
  return s;
}

// Empirical quantile with linear interpolation between order statistics:
// h = (n - 1) p, Q(p) = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
inline double empirical_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct ColumnDiscretization {
  std::string name;
  PredictorKind kind = PredictorKind::continuous;
  std::vector<double> cutpoints;  // ascending, deduplicated; empty for discrete columns

  // Upper limit of the interval holding x; values past the last cutpoint map to it.
  double map(double x) const {
    if (kind == PredictorKind::discrete || cutpoints.empty()) return x;
    const auto it = std::lower_bound(cutpoints.begin(), cutpoints.end(), x);
    return it == cutpoints.end() ? cutpoints.back() : *it;
  }
};

struct DiscretizationMap {
  int q = 10;
  std::vector<ColumnDiscretization> columns;
};

inline DiscretizationMap fit_discretization(const GeoDataset& ds, int q) {
  require(q >= 2, "fit_discretization: q must be >= 2");
  ds.validate();
  DiscretizationMap map;
  map.q = q;
  for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
    ColumnDiscretization col{ds.predictor_names[static_cast<std::size_t>(j)],
                             ds.predictor_kinds[static_cast<std::size_t>(j)],
                             {}};
    if (col.kind == PredictorKind::continuous) {
      std::vector<double> sorted(ds.x.col(j).begin(), ds.x.col(j).end());
      std::sort(sorted.begin(), sorted.end());
      for (int k = 1; k <= q; ++k) {
        const double c = empirical_quantile(sorted, static_cast<double>(k) / q);
        if (col.cutpoints.empty() || c > col.cutpoints.back()) col.cutpoints.push_back(c);
      }
    }
    map.columns.push_back(std::move(col));
  }
  return map;
}

inline GeoDataset apply_discretization(const GeoDataset& ds, const DiscretizationMap& map) {
  GeoDataset out = ds;
  for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
    const auto& name = ds.predictor_names[static_cast<std::size_t>(j)];
    const auto it = std::find_if(map.columns.begin(), map.columns.end(),
                                 [&](const ColumnDiscretization& c) { return c.name == name; });
    if (it == map.columns.end()) throw input_error("apply_discretization: column '" + name + "' not in map");
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) out.x(i, j) = it->map(ds.x(i, j));
  }
  return out;
}

struct Split {
  GeoDataset train;
  GeoDataset test;
  std::vector<int> train_rows;
  std::vector<int> test_rows;
};

// Fisher-Yates permutation of 0..n-1 from a seeded engine.
inline std::vector<int> seeded_permutation(int n, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  return idx;
}

inline Split random_split(const GeoDataset& ds, int n_train, std::uint64_t seed) {
  const auto n = static_cast<int>(ds.rows());
  require(n_train > 0 && n_train < n, "random_split: n_train must lie in (0, n)");
  const auto perm = seeded_permutation(n, seed);
  Split s;
  s.train_rows.assign(perm.begin(), perm.begin() + n_train);
  s.test_rows.assign(perm.begin() + n_train, perm.end());
  std::sort(s.train_rows.begin(), s.train_rows.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  s.train = subset(ds, s.train_rows);
  s.test = subset(ds, s.test_rows);
  return s;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

inline double parse_double(const std::string& text, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw input_error(context + ": cannot parse number '" + text + "'");
  }
  while (used < text.size() && (text[used] == ' ' || text[used] == '\t')) ++used;
  if (used != text.size()) throw input_error(context + ": cannot parse number '" + text + "'");
  return v;
}

// Header row with easting, northing, y (any position) and an optional ignored
// id column; all other columns are continuous predictors in file order. When
// the response is optional and absent, y is filled with zeros.
inline GeoDataset read_dataset_csv(std::istream& in, bool response_required = true) {
  std::string line;
  if (!std::getline(in, line)) throw input_error("csv: empty input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split_csv_line(line);
  int e_col = -1, n_col = -1, y_col = -1;
  std::vector<int> pred_cols;
  GeoDataset ds;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const auto& h = header[static_cast<std::size_t>(c)];
    if (h == "easting") e_col = c;
    else if (h == "northing") n_col = c;
    else if (h == "y") y_col = c;
    else if (h == "id") continue;
    else {
      pred_cols.push_back(c);
      ds.predictor_names.push_back(h);
    }
  }
  require(e_col >= 0 && n_col >= 0, "csv: header must contain easting and northing");
  require(y_col >= 0 || !response_required, "csv: header must contain y");
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw input_error("csv: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(header.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double(f, "csv line " + std::to_string(line_no)));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.y.resize(n);
  ds.x.resize(n, static_cast<Eigen::Index>(pred_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    ds.locations.push_back({r[static_cast<std::size_t>(e_col)], r[static_cast<std::size_t>(n_col)]});
    ds.y[i] = y_col >= 0 ? r[static_cast<std::size_t>(y_col)] : 0.0;
    for (std::size_t k = 0; k < pred_cols.size(); ++k) {
      ds.x(i, static_cast<Eigen::Index>(k)) = r[static_cast<std::size_t>(pred_cols[k])];
    }
  }
  ds.predictor_kinds.assign(pred_cols.size(), PredictorKind::continuous);
  ds.validate();
  return ds;
}

inline GeoDataset read_dataset_csv(const std::string& path, bool response_required = true) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  return read_dataset_csv(in, response_required);
}

inline void write_dataset_csv(std::ostream& out, const GeoDataset& ds) {
  out << "easting,northing,y";
  for (const auto& name : ds.predictor_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    const auto& l = ds.locations[static_cast<std::size_t>(i)];
    out << format_double(l.easting) << ',' << format_double(l.northing) << ',' << format_double(ds.y[i]);
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) out << ',' << format_double(ds.x(i, j));
    out << '\n';
  }
}

}  // namespace ssirus
