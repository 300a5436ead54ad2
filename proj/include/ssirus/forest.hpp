#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ssirus/common.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/geo.hpp"

namespace ssirus {

enum class SplitDirection : std::uint8_t { below, at_or_above };

// One constraint "x[predictor] < threshold" (below) or ">= threshold".
struct SplitSpec {
  int predictor = 0;
  double threshold = 0.0;
  SplitDirection direction = SplitDirection::below;

  bool admits(double value) const {
    return direction == SplitDirection::below ? value < threshold : value >= threshold;
  }

  friend auto operator<=>(const SplitSpec&, const SplitSpec&) = default;
  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

enum class ForestMode { ols, gls };

inline const char* to_string(ForestMode m) { return m == ForestMode::ols ? "ols" : "gls"; }

inline ForestMode parse_mode(const std::string& s) {
  if (s == "ols") return ForestMode::ols;
  if (s == "gls") return ForestMode::gls;
  throw input_error("unknown mode '" + s + "' (expected ols or gls)");
}

struct TreeNode {
  int predictor = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // child holding x < threshold
  int right = -1;  // child holding x >= threshold
  int depth = 0;
  int rows = 0;  // training rows inside the node's hyperrectangle
  double value = 0.0;

  bool is_leaf() const { return predictor < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestParams {
  ForestMode mode = ForestMode::ols;
  int mtry = 1;
  int min_leaf = 2;
  int max_depth = 2;
  std::uint64_t seed = 1;
};

struct Forest {
  ForestParams params;
  std::vector<Tree> trees;
  std::optional<ExponentialCovariance> covariance;
};

inline int default_mtry(Eigen::Index predictors) {
  return std::max(1, static_cast<int>(predictors / 3));
}

// Per-column level codes of a discretized predictor matrix. Level values are
// the distinct binned values in ascending order.
struct BinnedPredictors {
  Eigen::Index n = 0;
  std::vector<std::vector<double>> levels;
  std::vector<std::vector<std::uint16_t>> codes;

  explicit BinnedPredictors(const Eigen::MatrixXd& x) : n(x.rows()) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::vector<double> lv(x.col(j).begin(), x.col(j).end());
      std::sort(lv.begin(), lv.end());
      lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
      require(lv.size() <= std::numeric_limits<std::uint16_t>::max(), "too many distinct values in a predictor");
      std::vector<std::uint16_t> c(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        c[static_cast<std::size_t>(i)] =
            static_cast<std::uint16_t>(std::lower_bound(lv.begin(), lv.end(), x(i, j)) - lv.begin());
      }
      levels.push_back(std::move(lv));
      codes.push_back(std::move(c));
    }
  }

  int predictors() const { return static_cast<int>(levels.size()); }
};

// ---------------------------------------------------------------------------
// GLS loss over a leaf-indicator design

// min over beta of (y - Z beta)' Sigma^-1 (y - Z beta), evaluated as weighted
// least squares of L^-1 y on L^-1 Z. Optional weights are bootstrap counts on
// the whitened coordinates. Returns nullopt when Z is rank deficient under the
// weights (a candidate with an empty child).
inline std::optional<double> gls_split_cost(const Eigen::MatrixXd& membership, const Eigen::VectorXd& y,
                                            const CovarianceFactor& factor,
                                            const Eigen::VectorXd* weights = nullptr) {
  const Eigen::Index n = y.size();
  require(membership.rows() == n && factor.size() == n, "gls_split_cost: dimension mismatch");
  const Eigen::VectorXd cover = membership.rowwise().sum();
  require(((membership.array() == 0.0) || (membership.array() == 1.0)).all() && (cover.array() == 1.0).all(),
          "gls_split_cost: columns must be disjoint leaf indicators covering every row");
  Eigen::MatrixXd q(n, membership.cols());
  for (Eigen::Index c = 0; c < membership.cols(); ++c) q.col(c) = whiten(membership.col(c), factor);
  const Eigen::VectorXd yt = whiten(y, factor);
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd a = q.transpose() * w.asDiagonal() * q;
  const Eigen::VectorXd b = q.transpose() * w.asDiagonal() * yt;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const double scale = std::max(a.diagonal().maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 1e-12 * scale).any()) return std::nullopt;
  const Eigen::VectorXd beta = ldlt.solve(b);
  const Eigen::VectorXd r = yt - q * beta;
  return (w.array() * r.array().square()).sum();
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapSample {
  Eigen::VectorXd response;  // y (ols) or L^-1 y (gls): the working response
  Eigen::VectorXd weights;   // multinomial counts, summing to n
  std::vector<int> indices;  // the raw draw
};

inline std::vector<int> bootstrap_indices(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

inline Eigen::VectorXd counts_from_indices(const std::vector<int>& idx, Eigen::Index n) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int i : idx) c[i] += 1.0;
  return c;
}

// ols: rows are resampled with replacement, expressed as row counts.
// gls: the whitened coordinates are resampled, expressed as counts on them.
inline BootstrapSample bootstrap_sample(const Eigen::VectorXd& y, const CovarianceFactor* factor, ForestMode mode,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BootstrapSample s;
  s.indices = bootstrap_indices(y.size(), rng);
  s.weights = counts_from_indices(s.indices, y.size());
  if (mode == ForestMode::gls) {
    require(factor != nullptr, "bootstrap_sample: gls mode needs a covariance factor");
    s.response = whiten(y, *factor);
  } else {
    s.response = y;
  }
  return s;
}

// Whiten, resample the decorrelated values with replacement, color back.
inline Eigen::VectorXd colored_resample(const Eigen::VectorXd& y, const CovarianceFactor& factor,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto idx = bootstrap_indices(y.size(), rng);
  const Eigen::VectorXd z = whiten(y, factor);
  Eigen::VectorXd resampled(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) resampled[i] = z[idx[static_cast<std::size_t>(i)]];
  return color(resampled, factor);
}

// ---------------------------------------------------------------------------
// Split search over the leaves of the tree under construction

struct SplitChoice {
  int predictor = -1;
  double threshold = 0.0;
  double cost = 0.0;  // loss of the whole tree after the split
};

namespace detail {

struct LeafState {
  std::vector<int> rows;
  Eigen::VectorXd t;   // gls: L^-1 z_leaf
  Eigen::VectorXd wt;  // gls: weights (.) t
  double b = 0.0;      // gls: t' W yt ; ols: sum w y
  double sw = 0.0;     // ols: sum w
  double swyy = 0.0;   // ols: sum w y^2
  double sse() const { return sw > 0.0 ? swyy - b * b / sw : 0.0; }
};

// Cholesky solve of a small SPD system; returns b' A^-1 b, or nullopt if A is
// numerically singular.
inline std::optional<double> quadratic_form_inverse(Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index k = a.rows();
  const double scale = std::max(a.diagonal().maxCoeff(), 1e-300);
  for (Eigen::Index j = 0; j < k; ++j) {
    double d = a(j, j);
    for (Eigen::Index p = 0; p < j; ++p) d -= a(j, p) * a(j, p);
    if (!(d > 1e-12 * scale)) return std::nullopt;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < k; ++i) {
      double s = a(i, j);
      for (Eigen::Index p = 0; p < j; ++p) s -= a(i, p) * a(j, p);
      a(i, j) = s / ljj;
    }
  }
  double q = 0.0;
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    double s = b[i];
    for (Eigen::Index p = 0; p < i; ++p) s -= a(i, p) * z[p];
    z[i] = s / a(i, i);
    q += z[i] * z[i];
  }
  return q;
}

}  // namespace detail

// Mutable state for growing one tree: the working response, bootstrap weights
// and the current leaves (the columns of the binary design matrix).
class TreeDesign {
 public:
  TreeDesign(const BinnedPredictors& bins, const BootstrapSample& sample, ForestMode mode,
             const CovarianceFactor* factor, int min_leaf)
      : bins_(bins), response_(sample.response), weights_(sample.weights), mode_(mode), factor_(factor),
        min_leaf_(min_leaf) {
    const Eigen::Index n = bins.n;
    require(response_.size() == n && weights_.size() == n, "tree design: dimension mismatch");
    if (mode_ == ForestMode::gls) {
      require(factor_ != nullptr && factor_->size() == n, "tree design: gls mode needs a matching factor");
      wy_ = weights_.cwiseProduct(response_);
      total_ = response_.dot(wy_);
    }
    detail::LeafState root;
    root.rows.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) root.rows[static_cast<std::size_t>(i)] = static_cast<int>(i);
    fill_stats(root);
    leaves_.push_back(std::move(root));
    leaf_node_.push_back(0);
    root_cost_ = cost();
    // Absolute floor for gain and tie tolerances, so roundoff on an exactly
    // fitted (e.g. constant) response is not taken as an improvement.
    roundoff_ = 1e-12 * weights_.dot(response_.cwiseAbs2());
  }

  ForestMode mode() const { return mode_; }
  double root_cost() const { return root_cost_; }

  double cost() const {
    if (mode_ == ForestMode::ols) {
      double c = 0.0;
      for (const auto& l : leaves_) c += l.sse();
      return c;
    }
    Eigen::MatrixXd a = gram();
    Eigen::VectorXd b(static_cast<Eigen::Index>(leaves_.size()));
    for (std::size_t i = 0; i < leaves_.size(); ++i) b[static_cast<Eigen::Index>(i)] = leaves_[i].b;
    const auto q = detail::quadratic_form_inverse(a, b);
    return q ? total_ - *q : total_;
  }

  int leaf_of_node(int node) const {
    for (std::size_t i = 0; i < leaf_node_.size(); ++i) {
      if (leaf_node_[i] == node) return static_cast<int>(i);
    }
    return -1;
  }

  const std::vector<int>& rows_of_leaf(int leaf) const { return leaves_[static_cast<std::size_t>(leaf)].rows; }

  // Best split of one leaf over the candidate predictors. Candidates are
  // scanned in ascending predictor then threshold order and only a strictly
  // better cost (beyond a relative tie tolerance) replaces the incumbent.
  std::optional<SplitChoice> best_split(int leaf, std::span<const int> predictors) const {
    const auto& node = leaves_[static_cast<std::size_t>(leaf)];
    if (static_cast<int>(node.rows.size()) < 2 * min_leaf_) return std::nullopt;
    std::vector<int> order(predictors.begin(), predictors.end());
    std::sort(order.begin(), order.end());
    const double before = cost();
    const double tie = 1e-10 * root_cost_ + roundoff_;
    std::optional<SplitChoice> best;
    for (int p : order) {
      if (mode_ == ForestMode::ols) scan_ols(leaf, p, best, tie);
      else scan_gls(leaf, p, best, tie);
    }
    if (best && !(best->cost < before - 1e-12 * root_cost_ - roundoff_)) return std::nullopt;
    return best;
  }

  // Replaces leaf `leaf` by its two children; returns their leaf indices.
  std::pair<int, int> apply_split(int leaf, int predictor, double threshold, int left_node, int right_node) {
    auto parent = std::move(leaves_[static_cast<std::size_t>(leaf)]);
    const auto& codes = bins_.codes[static_cast<std::size_t>(predictor)];
    const auto& lv = bins_.levels[static_cast<std::size_t>(predictor)];
    detail::LeafState l, r;
    for (int i : parent.rows) {
      (lv[codes[static_cast<std::size_t>(i)]] < threshold ? l.rows : r.rows).push_back(i);
    }
    fill_stats(l);
    fill_stats(r);
    leaves_[static_cast<std::size_t>(leaf)] = std::move(l);
    leaf_node_[static_cast<std::size_t>(leaf)] = left_node;
    leaves_.push_back(std::move(r));
    leaf_node_.push_back(right_node);
    return {leaf, static_cast<int>(leaves_.size()) - 1};
  }

  // Leaf values: weighted means (ols) or GLS coefficients (gls).
  std::vector<std::pair<int, double>> leaf_values() const {
    std::vector<std::pair<int, double>> out;
    if (mode_ == ForestMode::ols) {
      for (std::size_t i = 0; i < leaves_.size(); ++i) {
        const auto& l = leaves_[i];
        out.emplace_back(leaf_node_[i], l.sw > 0.0 ? l.b / l.sw : 0.0);
      }
      return out;
    }
    const Eigen::MatrixXd a = gram();
    Eigen::VectorXd b(static_cast<Eigen::Index>(leaves_.size()));
    for (std::size_t i = 0; i < leaves_.size(); ++i) b[static_cast<Eigen::Index>(i)] = leaves_[i].b;
    const Eigen::VectorXd beta = a.ldlt().solve(b);
    for (std::size_t i = 0; i < leaves_.size(); ++i) out.emplace_back(leaf_node_[i], beta[static_cast<Eigen::Index>(i)]);
    return out;
  }

 private:
  void fill_stats(detail::LeafState& leaf) const {
    if (mode_ == ForestMode::ols) {
      for (int i : leaf.rows) {
        const double w = weights_[i], y = response_[i];
        leaf.sw += w;
        leaf.b += w * y;
        leaf.swyy += w * y * y;
      }
      return;
    }
    const Eigen::Index n = bins_.n;
    const auto& linv = factor_->lower_inverse;
    leaf.t = Eigen::VectorXd::Zero(n);
    for (int i : leaf.rows) leaf.t.tail(n - i) += linv.col(i).tail(n - i);
    leaf.wt = weights_.cwiseProduct(leaf.t);
    leaf.b = leaf.t.dot(wy_);
  }

  Eigen::MatrixXd gram() const {
    const auto k = static_cast<Eigen::Index>(leaves_.size());
    Eigen::MatrixXd a(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        a(i, j) = a(j, i) = leaves_[static_cast<std::size_t>(i)].t.dot(leaves_[static_cast<std::size_t>(j)].wt);
      }
    }
    return a;
  }

  static void offer(std::optional<SplitChoice>& best, int p, double threshold, double c, double tie) {
    if (!best || c < best->cost - tie) best = SplitChoice{p, threshold, c};
  }

  void scan_ols(int leaf, int p, std::optional<SplitChoice>& best, double tie) const {
    const auto& node = leaves_[static_cast<std::size_t>(leaf)];
    const auto& codes = bins_.codes[static_cast<std::size_t>(p)];
    const auto& lv = bins_.levels[static_cast<std::size_t>(p)];
    const std::size_t nl = lv.size();
    std::vector<double> sw(nl, 0.0), swy(nl, 0.0), swyy(nl, 0.0);
    std::vector<int> cnt(nl, 0);
    for (int i : node.rows) {
      const auto c = codes[static_cast<std::size_t>(i)];
      const double w = weights_[i], y = response_[i];
      sw[c] += w;
      swy[c] += w * y;
      swyy[c] += w * y * y;
      ++cnt[c];
    }
    double others = 0.0;
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
      if (static_cast<int>(k) != leaf) others += leaves_[k].sse();
    }
    const int total_rows = static_cast<int>(node.rows.size());
    double lsw = 0.0, lswy = 0.0, lswyy = 0.0;
    int lrows = 0;
    bool started = false;
    for (std::size_t k = 0; k < nl; ++k) {
      if (cnt[k] == 0) continue;
      if (started) {
        const int rrows = total_rows - lrows;
        const double rsw = node.sw - lsw;
        if (lrows >= min_leaf_ && rrows >= min_leaf_ && lsw > 0.0 && rsw > 0.0) {
          const double rswy = node.b - lswy, rswyy = node.swyy - lswyy;
          const double c = others + (lswyy - lswy * lswy / lsw) + (rswyy - rswy * rswy / rsw);
          offer(best, p, lv[k], c, tie);
        }
      }
      started = true;
      lsw += sw[k];
      lswy += swy[k];
      lswyy += swyy[k];
      lrows += cnt[k];
    }
  }

  void scan_gls(int leaf, int p, std::optional<SplitChoice>& best, double tie) const {
    const auto& node = leaves_[static_cast<std::size_t>(leaf)];
    const auto& codes = bins_.codes[static_cast<std::size_t>(p)];
    const auto& lv = bins_.levels[static_cast<std::size_t>(p)];
    const auto& linv = factor_->lower_inverse;
    const Eigen::Index n = bins_.n;
    const std::size_t nl = lv.size();
    std::vector<int> cnt(nl, 0);
    for (int i : node.rows) ++cnt[codes[static_cast<std::size_t>(i)]];
    int present = 0;
    for (int c : cnt) present += c > 0 ? 1 : 0;
    if (present < 2) return;

    std::vector<Eigen::VectorXd> bucket(nl);
    for (std::size_t k = 0; k < nl; ++k) {
      if (cnt[k] > 0) bucket[k] = Eigen::VectorXd::Zero(n);
    }
    for (int i : node.rows) {
      bucket[codes[static_cast<std::size_t>(i)]].tail(n - i) += linv.col(i).tail(n - i);
    }

    // Leaves other than the one being split keep their Gram block.
    std::vector<int> others;
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
      if (static_cast<int>(k) != leaf) others.push_back(static_cast<int>(k));
    }
    const auto m = static_cast<Eigen::Index>(others.size());
    Eigen::MatrixXd fixed(m, m);
    Eigen::VectorXd fixed_b(m), a_jm(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& li = leaves_[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])];
      fixed_b[i] = li.b;
      a_jm[i] = node.t.dot(li.wt);
      for (Eigen::Index j = 0; j <= i; ++j) {
        fixed(i, j) = fixed(j, i) = li.t.dot(leaves_[static_cast<std::size_t>(others[static_cast<std::size_t>(j)])].wt);
      }
    }
    const double a_jj = node.t.dot(node.wt);

    Eigen::VectorXd tl = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd a_lm(m);
    Eigen::MatrixXd a(m + 2, m + 2);
    Eigen::VectorXd b(m + 2);
    const int total_rows = static_cast<int>(node.rows.size());
    int lrows = 0;
    bool started = false;
    for (std::size_t k = 0; k < nl; ++k) {
      if (cnt[k] == 0) continue;
      if (started && lrows >= min_leaf_ && total_rows - lrows >= min_leaf_) {
        const double a_ll = tl.dot(weights_.cwiseProduct(tl));
        const double a_lj = tl.dot(node.wt);
        const double b_l = tl.dot(wy_);
        for (Eigen::Index i = 0; i < m; ++i) {
          a_lm[i] = tl.dot(leaves_[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])].wt);
        }
        a.topLeftCorner(m, m) = fixed;
        a.block(0, m, m, 1) = a_lm;
        a.block(m, 0, 1, m) = a_lm.transpose();
        a.block(0, m + 1, m, 1) = a_jm - a_lm;
        a.block(m + 1, 0, 1, m) = (a_jm - a_lm).transpose();
        a(m, m) = a_ll;
        a(m, m + 1) = a(m + 1, m) = a_lj - a_ll;
        a(m + 1, m + 1) = a_jj - 2.0 * a_lj + a_ll;
        b.head(m) = fixed_b;
        b[m] = b_l;
        b[m + 1] = node.b - b_l;
        if (const auto q = detail::quadratic_form_inverse(a, b)) offer(best, p, lv[k], total_ - *q, tie);
      }
      started = true;
      tl += bucket[k];
      lrows += cnt[k];
    }
  }

  const BinnedPredictors& bins_;
  Eigen::VectorXd response_;
  Eigen::VectorXd weights_;
  ForestMode mode_;
  const CovarianceFactor* factor_;
  int min_leaf_;
  Eigen::VectorXd wy_;
  double total_ = 0.0;
  double root_cost_ = 0.0;
  double roundoff_ = 0.0;
  std::vector<detail::LeafState> leaves_;
  std::vector<int> leaf_node_;
};

// Draws mtry distinct predictors (partial Fisher-Yates), returned ascending.
inline std::vector<int> sample_predictors(int p, int mtry, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) all[static_cast<std::size_t>(i)] = i;
  const int k = std::clamp(mtry, 1, p);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, p - 1);
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

// Shared, read-only inputs for growing trees on one dataset.
struct ForestContext {
  BinnedPredictors bins;
  Eigen::VectorXd y;
  ForestParams params;
  const CovarianceFactor* factor = nullptr;
  Eigen::VectorXd whitened_y;

  ForestContext(const GeoDataset& binned, ForestParams p, const CovarianceFactor* f)
      : bins(binned.x), y(binned.y), params(p), factor(f) {
    binned.validate();
    require(p.mtry >= 1 && p.mtry <= binned.x.cols(), "forest: mtry must lie in [1, P]");
    require(p.min_leaf >= 1, "forest: min_leaf must be >= 1");
    require(p.max_depth >= 1, "forest: max_depth must be >= 1");
    if (p.mode == ForestMode::gls) {
      require(f != nullptr && f->size() == binned.rows(), "forest: gls mode needs a covariance factor over the rows");
      whitened_y = whiten(y, *f);
    }
  }
};

inline std::uint64_t tree_seed(std::uint64_t master, std::size_t index) { return derive_seed(master, index); }

inline Tree grow_tree(const ForestContext& ctx, std::size_t index) {
  std::mt19937_64 rng(tree_seed(ctx.params.seed, index));
  BootstrapSample sample;
  sample.indices = bootstrap_indices(ctx.bins.n, rng);
  sample.weights = counts_from_indices(sample.indices, ctx.bins.n);
  sample.response = ctx.params.mode == ForestMode::gls ? ctx.whitened_y : ctx.y;

  TreeDesign design(ctx.bins, sample, ctx.params.mode, ctx.factor, ctx.params.min_leaf);
  Tree tree;
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 0, static_cast<int>(ctx.bins.n), 0.0});
  std::deque<int> frontier{0};
  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    if (tree.nodes[static_cast<std::size_t>(id)].depth >= ctx.params.max_depth) continue;
    const int leaf = design.leaf_of_node(id);
    if (static_cast<int>(design.rows_of_leaf(leaf).size()) < 2 * ctx.params.min_leaf) continue;
    const auto candidates = sample_predictors(ctx.bins.predictors(), ctx.params.mtry, rng);
    const auto choice = design.best_split(leaf, candidates);
    if (!choice) continue;
    const int left = static_cast<int>(tree.nodes.size());
    const int right = left + 1;
    const int depth = tree.nodes[static_cast<std::size_t>(id)].depth + 1;
    auto& parent = tree.nodes[static_cast<std::size_t>(id)];
    parent.predictor = choice->predictor;
    parent.threshold = choice->threshold;
    parent.left = left;
    parent.right = right;
    const auto [ll, rl] = design.apply_split(leaf, choice->predictor, choice->threshold, left, right);
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, depth, static_cast<int>(design.rows_of_leaf(ll).size()), 0.0});
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, depth, static_cast<int>(design.rows_of_leaf(rl).size()), 0.0});
    frontier.push_back(left);
    frontier.push_back(right);
  }
  for (const auto& [node, value] : design.leaf_values()) tree.nodes[static_cast<std::size_t>(node)].value = value;
  return tree;
}

// Trees [first, first + count) of the forest defined by ctx; tree i depends
// only on (seed, i), so growth order and thread count do not matter.
inline std::vector<Tree> grow_trees(const ForestContext& ctx, std::size_t first, std::size_t count,
                                    unsigned threads = 1) {
  std::vector<Tree> trees(count);
  parallel_for(count, threads, [&](std::size_t k) { trees[k] = grow_tree(ctx, first + k); });
  return trees;
}

inline Forest grow_forest(const GeoDataset& binned, ForestParams params, int tree_count,
                          const CovarianceFactor* factor = nullptr, unsigned threads = 1) {
  require(tree_count >= 1, "grow_forest: need at least one tree");
  const ForestContext ctx(binned, params, factor);
  Forest f;
  f.params = params;
  f.trees = grow_trees(ctx, 0, static_cast<std::size_t>(tree_count), threads);
  return f;
}

inline double predict_tree(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  int id = 0;
  while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const auto& nd = tree.nodes[static_cast<std::size_t>(id)];
    id = x[nd.predictor] < nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[static_cast<std::size_t>(id)].value;
}

}  // namespace ssirus
