#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include <Eigen/Core>

#include "modalrecon/error.hpp"

namespace modalrecon {

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

/// n-point Gauss-Legendre rule on [a, b]. Newton iteration on the
/// three-term recurrence; adequate for n up to ~1e5.
inline QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  detail::require(n >= 1, "gauss_legendre: n must be >= 1");
  QuadratureRule q{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    if (n == 1) {
      p1 = x;
      p0 = 1.0;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes(i) = mid - half * x;
    q.nodes(n - 1 - i) = mid + half * x;
    q.weights(i) = half * w;
    q.weights(n - 1 - i) = half * w;
  }
  return q;
}

/// Composite Gauss-Legendre: `panels` equal panels of `per_panel` points.
inline QuadratureRule composite_gauss_legendre(double a, double b, int panels,
                                               int per_panel) {
  detail::require(panels >= 1 && per_panel >= 1,
                  "composite_gauss_legendre: panels and per_panel must be >= 1");
  const QuadratureRule ref = gauss_legendre(per_panel, 0.0, 1.0);
  QuadratureRule q{Eigen::VectorXd(panels * per_panel),
                   Eigen::VectorXd(panels * per_panel)};
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    for (int i = 0; i < per_panel; ++i) {
      q.nodes(p * per_panel + i) = a + h * (p + ref.nodes(i));
      q.weights(p * per_panel + i) = h * ref.weights(i);
    }
  }
  return q;
}

/// Weights for integrating samples on a uniform grid of `count` nodes with
/// spacing dt. Fourth-order Gregory end corrections (exact for cubics)
/// when count >= 6, trapezoid otherwise. All weights are positive.
inline Eigen::VectorXd uniform_grid_weights(int count, double dt) {
  detail::require(count >= 1, "uniform_grid_weights: empty grid");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(count, dt);
  if (count == 1) {
    w(0) = 0.0;
    return w;
  }
  if (count < 6) {
    w(0) = w(count - 1) = 0.5 * dt;
    return w;
  }
  constexpr double c0 = 3.0 / 8.0, c1 = 7.0 / 6.0, c2 = 23.0 / 24.0;
  w(0) = w(count - 1) = c0 * dt;
  w(1) = w(count - 2) = c1 * dt;
  w(2) = w(count - 3) = c2 * dt;
  return w;
}

}  // namespace modalrecon
