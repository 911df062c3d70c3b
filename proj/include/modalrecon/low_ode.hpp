#pragma once

// The reduced low-mode equation dU_L/dt = A U_L + P_n F(U_L + R(U_L)).
// R is defined over a whole observation window, so the right-hand side is
// nonlocal in time. It is discretized by sliding windows: on each window the
// low trajectory is found by waveform relaxation (reconstruct U_H from the
// current guess, re-integrate the low equation by Duhamel) and the first
// `period` of it is committed before the window advances.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/propagation.hpp"
#include "modalrecon/reconstruction.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

struct LowOdeOptions {
  /// Re-reconstruction period; 0 selects a quarter of the observation window.
  double period = 0.0;
  int max_relaxations = 50;
  double relax_tol = 1e-12;
};

inline Trajectory reduced_low_ode(const ObservationOperator& obs, const NonlinearOperator& F,
                                  const SobolevScale& scale, const State& u_low_initial,
                                  const ObservationRecord& record,
                                  const ReconstructionConfig& config, double T, double dt,
                                  const LowOdeOptions& options = {}) {
  const ModelPtr& model = obs.model();
  const double n = config.threshold_n;
  u_low_initial.check_same(State(model));
  {
    State high = project_high(u_low_initial, n);
    detail::require(high.coords().isZero(0.0),
                    "reduced_low_ode: initial state has coordinates on modes mu > n");
  }
  const TimeGrid grid = make_time_grid(T, dt, record.grid().t0);
  detail::require(record.grid().steps >= grid.steps &&
                      std::abs(record.grid().dt - dt) <= 1e-14 * std::max(1.0, dt),
                  "reduced_low_ode: record must cover [0, T] with step dt");
  const int total = grid.steps;
  const int window = static_cast<int>(std::round(obs.window() / dt));
  detail::require(window >= 3, "reduced_low_ode: observation window shorter than 3 steps");
  detail::require(window <= total, "reduced_low_ode: T shorter than the observation window");
  const double period = options.period > 0.0 ? options.period : obs.window() / 4.0;
  const int stride = std::max(1, static_cast<int>(std::round(period / dt)));
  detail::require(options.max_relaxations >= 1, "reduced_low_ode: max_relaxations must be >= 1");

  Trajectory low(model, grid, "reduced-low-ode");
  low.column(0) = u_low_initial.coords();
  const ExponentialWeights ew(model->mode_frequencies(), dt);

  int s = 0;
  while (s < total) {
    const int ws = std::min(s, total - window);
    const int we = ws + window;
    // Initial guess on (s, we]: free flow from the committed state.
    for (int m = s + 1; m <= we; ++m)
      low.column(m) = propagate_coords(*model, low.column(s), (m - s) * dt);
    const ObservationRecord window_record{record.values.segment(ws, we)};
    const int len = we - s;
    for (int k = 0; k < options.max_relaxations; ++k) {
      Trajectory segment = low.segment(ws, we);
      ReconstructionResult r =
          reconstruct_high(obs, F, scale, segment, window_record, config);
      if (!r.converged)
        throw NumericalError("reduced_low_ode: reconstruction on window [" +
                             std::to_string(grid.time(ws)) + ", " + std::to_string(grid.time(we)) +
                             "] ended with status " + std::string(to_string(r.status)));
      Eigen::MatrixXcd h(model->n_modes(), len + 1);
      for (int m = 0; m <= len; ++m) {
        Eigen::VectorXd f = F.apply(segment.column(s - ws + m) + r.high_trajectory.column(s - ws + m));
        detail::mask_modes(*model, f, n, true);
        h.col(m) = to_normalized(*model, f);
      }
      const Eigen::MatrixXcd Z = detail::duhamel_normalized(
          ew, to_normalized(*model, low.column(s)), &h, len);
      double change = 0.0;
      for (int m = 1; m <= len; ++m) {
        const Eigen::VectorXd next = from_normalized(*model, Z.col(m));
        change = std::max(change, scale.norm(next - low.column(s + m)));
        low.column(s + m) = next;
      }
      if (change <= options.relax_tol || F.is_zero()) break;
      if (k + 1 == options.max_relaxations)
        throw NumericalError("reduced_low_ode: waveform relaxation did not converge on window [" +
                             std::to_string(grid.time(ws)) + ", " +
                             std::to_string(grid.time(we)) + "]");
    }
    s = we == total ? total : s + stride;
  }
  return low;
}

}  // namespace modalrecon
