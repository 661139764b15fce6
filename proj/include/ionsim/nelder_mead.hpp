#pragma once

#include <algorithm>
#include <functional>
#include <vector>

namespace ionsim {

struct NelderMeadOptions {
  int max_iterations = 6000;
  double tolerance = 1e-8;   // absolute spread of simplex values
  double initial_step = 0.5;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Downhill simplex minimiser (standard reflect/expand/contract/shrink).
inline NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x0, const NelderMeadOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> value(n + 1);
  for (int i = 0; i < n; ++i) simplex[i + 1][i] += opts.initial_step;
  for (int i = 0; i <= n; ++i) value[i] = f(simplex[i]);

  std::vector<int> order(n + 1);
  NelderMeadResult result;
  for (result.iterations = 0; result.iterations < opts.max_iterations;
       ++result.iterations) {
    for (int i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return value[a] < value[b]; });
    const int best = order[0], worst = order[n], second = order[n - 1];
    if (value[worst] - value[best] < opts.tolerance) {
      result.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (int i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (int d = 0; d < n; ++d) centroid[d] += simplex[i][d] / n;
    }
    auto blend = [&](double alpha) {
      std::vector<double> x(n);
      for (int d = 0; d < n; ++d) {
        x[d] = centroid[d] + alpha * (simplex[worst][d] - centroid[d]);
      }
      return x;
    };

    const auto reflected = blend(-1.0);
    const double fr = f(reflected);
    if (fr < value[best]) {
      const auto expanded = blend(-2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        value[worst] = fe;
      } else {
        simplex[worst] = reflected;
        value[worst] = fr;
      }
      continue;
    }
    if (fr < value[second]) {
      simplex[worst] = reflected;
      value[worst] = fr;
      continue;
    }
    const auto contracted = blend(fr < value[worst] ? -0.5 : 0.5);
    const double fc = f(contracted);
    if (fc < std::min(fr, value[worst])) {
      simplex[worst] = contracted;
      value[worst] = fc;
      continue;
    }
    for (int i = 0; i <= n; ++i) {  // shrink toward best
      if (i == best) continue;
      for (int d = 0; d < n; ++d) {
        simplex[i][d] = 0.5 * (simplex[i][d] + simplex[best][d]);
      }
      value[i] = f(simplex[i]);
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i) {
    if (value[i] < value[best]) best = i;
  }
  result.x = simplex[best];
  result.value = value[best];
  return result;
}

}  // namespace ionsim
