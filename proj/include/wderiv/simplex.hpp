#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace wderiv {

struct SimplexOptions {
  int max_iterations = 2000;
  // Converged when the function-value spread across the simplex is below
  // this, relative to the best value.
  double relative_tolerance = 1e-8;
  // Initial simplex edge along coordinate i: step * max(1, |x0_i|).
  double initial_step = 0.1;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Nelder-Mead downhill simplex minimization. The objective may return a
// large sentinel (e.g. 1e300) for rejected points; the search treats those
// as ordinary bad values.
inline SimplexResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x0, const SimplexOptions& opts = {}) {
  const std::size_t n = x0.size();
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i)
    pts[i + 1][i] += opts.initial_step * std::max(1.0, std::abs(x0[i]));

  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);

  std::vector<std::size_t> order(n + 1);
  SimplexResult res;
  for (res.iterations = 0; res.iterations < opts.max_iterations;
       ++res.iterations) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });

    const double best = vals[order[0]];
    const double worst = vals[order[n]];
    if (std::abs(worst - best) <=
        opts.relative_tolerance * (std::abs(best) + 1e-30)) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[order[i]][j];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    auto blend = [&](double coeff) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j)
        p[j] = centroid[j] + coeff * (pts[order[n]][j] - centroid[j]);
      return p;
    };

    std::vector<double> reflected = blend(-alpha);
    const double fr = f(reflected);
    if (fr < vals[order[0]]) {
      std::vector<double> expanded = blend(-alpha * gamma);
      const double fe = f(expanded);
      if (fe < fr) {
        pts[order[n]] = std::move(expanded);
        vals[order[n]] = fe;
      } else {
        pts[order[n]] = std::move(reflected);
        vals[order[n]] = fr;
      }
      continue;
    }
    if (fr < vals[order[n - 1]]) {
      pts[order[n]] = std::move(reflected);
      vals[order[n]] = fr;
      continue;
    }
    std::vector<double> contracted = blend(fr < vals[order[n]] ? -rho : rho);
    const double fc = f(contracted);
    if (fc < std::min(fr, vals[order[n]])) {
      pts[order[n]] = std::move(contracted);
      vals[order[n]] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        pts[order[i]][j] = pts[order[0]][j] +
                           shrink * (pts[order[i]][j] - pts[order[0]][j]);
      vals[order[i]] = f(pts[order[i]]);
    }
  }

  std::size_t best_idx = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (vals[i] < vals[best_idx]) best_idx = i;
  res.x = pts[best_idx];
  res.value = vals[best_idx];
  return res;
}

}  // namespace wderiv
