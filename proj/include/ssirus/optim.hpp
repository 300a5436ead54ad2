#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace ssirus {

struct Minimum {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

// Nelder-Mead on a box: trial points are clamped to [lower, upper].
inline Minimum nelder_mead_box(const std::function<double(const std::vector<double>&)>& f, std::vector<double> start,
                               const std::vector<double>& lower, const std::vector<double>& upper,
                               const std::vector<double>& step, int max_evaluations = 400, double tol = 1e-10) {
  const std::size_t d = start.size();
  auto clamp = [&](std::vector<double> p) {
    for (std::size_t i = 0; i < d; ++i) p[i] = std::clamp(p[i], lower[i], upper[i]);
    return p;
  };
  Minimum result;
  auto eval = [&](const std::vector<double>& p) {
    ++result.evaluations;
    const double v = f(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  std::vector<std::vector<double>> simplex{clamp(start)};
  for (std::size_t i = 0; i < d; ++i) {
    auto p = start;
    p[i] += step[i];
    if (p[i] > upper[i]) p[i] = start[i] - step[i];
    simplex.push_back(clamp(p));
  }
  std::vector<double> values;
  for (const auto& p : simplex) values.push_back(eval(p));

  while (result.evaluations < max_evaluations) {
    std::vector<std::size_t> order(d + 1);
    for (std::size_t i = 0; i <= d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> v2;
    for (auto i : order) {
      s2.push_back(simplex[i]);
      v2.push_back(values[i]);
    }
    simplex = std::move(s2);
    values = std::move(v2);
    if (std::abs(values[d] - values[0]) <= tol * (std::abs(values[0]) + tol)) {
      result.converged = true;
      break;
    }
    std::vector<double> centroid(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[i][k] / static_cast<double>(d);
    }
    auto along = [&](double t) {
      std::vector<double> p(d);
      for (std::size_t k = 0; k < d; ++k) p[k] = centroid[k] + t * (simplex[d][k] - centroid[k]);
      return clamp(p);
    };
    const auto reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < values[0]) {
      const auto expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[d] = expanded;
        values[d] = fe;
      } else {
        simplex[d] = reflected;
        values[d] = fr;
      }
    } else if (fr < values[d - 1]) {
      simplex[d] = reflected;
      values[d] = fr;
    } else {
      const auto contracted = fr < values[d] ? along(-0.5) : along(0.5);
      const double fc = eval(contracted);
      if (fc < std::min(fr, values[d])) {
        simplex[d] = contracted;
        values[d] = fc;
      } else {
        for (std::size_t i = 1; i <= d; ++i) {
          for (std::size_t k = 0; k < d; ++k) simplex[i][k] = simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
          values[i] = eval(simplex[i]);
        }
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  return result;
}

// Golden-section search for a unimodal function on [a, b].
inline std::pair<double, double> golden_section(const std::function<double(double)>& f, double a, double b,
                                                double tol = 1e-10, int max_iter = 200) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && std::abs(b - a) > tol * (std::abs(c) + std::abs(d) + tol); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace ssirus
