#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/propagation.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

enum class Integrator {
  strang,    ///< second order: half linear, nonlinear, half linear
  yoshida4,  ///< fourth order triple-jump composition of strang
};

inline std::string_view to_string(Integrator i) {
  return i == Integrator::strang ? "strang" : "yoshida4";
}

struct SolveOptions {
  Integrator integrator = Integrator::strang;
  /// Blow-up is declared when the energy norm exceeds this.
  double blowup_ceiling = 1e8;
  /// Store every `record_stride`-th step only.
  int record_stride = 1;
};

namespace detail {

/// Exact (wave, plate) or implicit-midpoint (nls) flow of dU/dt = F(U) over dt.
/// The nls midpoint step conserves the L2 mass up to the fixed-point tolerance.
inline void nonlinear_substep(const NonlinearOperator& F, Eigen::VectorXd& x, double dt) {
  if (F.is_zero()) return;
  const ModelOperator& m = *F.model();
  const int n = m.n_modes();
  if (m.second_order()) {
    // F depends on u only and has no u-component: u is frozen, v moves linearly.
    x.tail(n) += dt * F.apply(x).tail(n);
    return;
  }
  Eigen::VectorXd y = x + dt * F.apply(x);
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd next = x + dt * F.apply(0.5 * (x + y));
    const double change = (next - y).lpNorm<Eigen::Infinity>();
    y.swap(next);
    if (change <= 1e-16 * (1.0 + y.lpNorm<Eigen::Infinity>())) {
      x = y;
      return;
    }
  }
  throw NumericalError("nonlinear_solve: implicit midpoint iteration did not converge "
                       "(reduce dt)");
}

inline void strang_step(const NonlinearOperator& F, Eigen::VectorXd& x, double dt) {
  const ModelOperator& m = *F.model();
  x = propagate_coords(m, x, 0.5 * dt);
  nonlinear_substep(F, x, dt);
  x = propagate_coords(m, x, 0.5 * dt);
}

inline void integrator_step(const NonlinearOperator& F, Integrator kind, Eigen::VectorXd& x,
                            double dt) {
  if (kind == Integrator::strang) {
    strang_step(F, x, dt);
    return;
  }
  const double cbrt2 = std::cbrt(2.0);
  const double w1 = 1.0 / (2.0 - cbrt2);
  const double w0 = -cbrt2 / (2.0 - cbrt2);
  strang_step(F, x, w1 * dt);
  strang_step(F, x, w0 * dt);
  strang_step(F, x, w1 * dt);
}

}  // namespace detail

/// Splitting integrator for dU/dt = A U + F(U) on [0, T]: exact modal linear
/// flow composed with the pointwise nonlinear flow on the dealiased grid.
inline Trajectory nonlinear_solve(const NonlinearOperator& F, const State& u0, double T,
                                  double dt, const SolveOptions& options = {}) {
  const ModelPtr& model = F.model();
  u0.check_same(State(model));
  const TimeGrid fine = make_time_grid(T, dt);
  detail::require(options.record_stride >= 1 && fine.steps % options.record_stride == 0,
                  "nonlinear_solve: record_stride must divide the step count");
  const TimeGrid grid{0.0, dt * options.record_stride, fine.steps / options.record_stride};
  Trajectory out(model, grid, std::string(to_string(options.integrator)));
  const SobolevScale energy(model, 0.0);
  Eigen::VectorXd x = u0.coords();
  out.column(0) = x;
  if (F.is_zero()) {
    // Free flow: evaluate e^{tA} u0 at each recorded time instead of
    // compounding per-step rounding.
    for (int m = 1; m <= grid.steps; ++m) out.column(m) = propagate_coords(*model, x, grid.time(m));
    return out;
  }
  for (int m = 1; m <= fine.steps; ++m) {
    detail::integrator_step(F, options.integrator, x, dt);
    const double nrm = energy.norm(x);
    if (!std::isfinite(nrm) || nrm > options.blowup_ceiling) {
      throw BlowUpError("nonlinear_solve: norm exceeded the ceiling at t = " +
                            std::to_string(fine.time(m)),
                        fine.time(m));
    }
    if (m % options.record_stride == 0) out.column(m / options.record_stride) = x;
  }
  return out;
}

inline Trajectory nonlinear_solve(const ModelPtr& model, const Nonlinearity& nl, const State& u0,
                                  double T, double dt, const SolveOptions& options = {}) {
  return nonlinear_solve(NonlinearOperator(model, nl), u0, T, dt, options);
}

}  // namespace modalrecon
