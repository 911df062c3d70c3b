#pragma once

// High-frequency reconstruction U_H = R(U_L) by Picard iteration on the
// observation problem over the modes mu > n.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/gramian.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/observation_problem.hpp"
#include "modalrecon/random.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

enum class ReconstructionVariant { plain, linearized };

inline std::string_view to_string(ReconstructionVariant v) {
  return v == ReconstructionVariant::plain ? "plain" : "linearized";
}

struct ReconstructionConfig {
  double threshold_n = 0.0;
  double sigma = 0.0;
  double ball_radius = std::numeric_limits<double>::infinity();
  int max_iters = 50;
  double fix_tol = 1e-12;
  /// Time nodes of the continuous Gramian attached to the result (0: default).
  int gramian_nodes = 0;
  ReconstructionVariant variant = ReconstructionVariant::plain;
  double rank_tolerance = 1e-12;
};

enum class ReconstructionStatus { converged, max_iterations, diverged, ball_exit };

inline std::string_view to_string(ReconstructionStatus s) {
  switch (s) {
    case ReconstructionStatus::converged: return "converged";
    case ReconstructionStatus::max_iterations: return "max_iterations";
    case ReconstructionStatus::diverged: return "diverged";
    case ReconstructionStatus::ball_exit: return "ball_exit";
  }
  return "unknown";
}

struct ReconstructionResult {
  explicit ReconstructionResult(Trajectory high) : high_trajectory(std::move(high)) {}

  Trajectory high_trajectory;
  int iterations = 0;
  /// d_{j+1} / d_j with d_j the sup-in-time X^sigma size of the j-th update.
  std::vector<double> contraction_estimates;
  std::vector<double> increments;
  bool converged = false;
  ReconstructionStatus status = ReconstructionStatus::max_iterations;
  /// (sum_m w_m ||Pi_n (C (U_L + U_H) - y)||_sigma^2)^{1/2}.
  double residual_observation = 0.0;
  /// Same without Pi_n: the part of y the model cannot explain.
  double raw_observation_misfit = 0.0;
  /// 10 fix_tol c_obs, with c_obs from the discrete Gramian.
  double residual_bound = 0.0;
  GramianReport gramian;  ///< the one used by the solve
};

namespace detail {

inline void check_low_trajectory(const Trajectory& u_low, const SobolevScale& scale, double n,
                                 double radius) {
  const ModelOperator& m = *u_low.model();
  const ModeSet H = high_modes(m, n);
  const int nm = m.n_modes();
  double high = 0.0;
  for (int k : H)
    high = std::max({high, u_low.coords().row(k).cwiseAbs().maxCoeff(),
                     u_low.coords().row(nm + k).cwiseAbs().maxCoeff()});
  require(high == 0.0, "reconstruct_high: u_low has coordinates on modes mu > n");
  if (std::isfinite(radius))
    require(sup_norm(u_low, scale) <= radius,
            "reconstruct_high: sup-in-time norm of u_low exceeds the ball radius R0");
}

inline Trajectory high_part_of(const Trajectory& tr, double n) {
  Trajectory out = tr;
  for (int m = 0; m < out.size(); ++m) mask_modes(*tr.model(), out.column(m), n, false);
  return out;
}

}  // namespace detail

/// Solves dU_H/dt = A U_H + Q_n F(U_L + U_H), C U_H = y - C U_L (up to the
/// projector Pi_n) by Picard iteration from U_H = 0. The linearized variant
/// moves Q_n DF(U_L) into the propagator and iterates on the remainder
/// Q_n (F(U_L + U_H) - DF(U_L) U_H).
inline ReconstructionResult reconstruct_high(const ObservationOperator& obs,
                                             const NonlinearOperator& F,
                                             const SobolevScale& scale, const Trajectory& u_low,
                                             const ObservationRecord& record,
                                             const ReconstructionConfig& config) {
  const ModelPtr& model = obs.model();
  detail::require(config.max_iters >= 1, "reconstruct_high: max_iters must be >= 1");
  detail::require(config.fix_tol > 0.0, "reconstruct_high: fix_tol must be > 0");
  detail::require(config.threshold_n >= 0.0, "reconstruct_high: threshold n must be >= 0");
  detail::require(u_low.model() == model && F.model() == model && scale.model() == model,
                  "reconstruct_high: inputs built over different models");
  detail::require(record.values.model() == model && record.grid().matches(u_low.grid()),
                  "reconstruct_high: record and u_low on different grids");
  const double n = config.threshold_n;
  detail::check_low_trajectory(u_low, scale, n, config.ball_radius);
  const bool linearized = config.variant == ReconstructionVariant::linearized;

  const ObservationProblem problem =
      linearized ? ObservationProblem(obs, scale, F, u_low, n, config.rank_tolerance)
                 : ObservationProblem(obs, scale, high_modes(*model, n), u_low.grid(),
                                      config.rank_tolerance);
  const TimeGrid& grid = u_low.grid();
  Trajectory G = record.values;
  for (int m = 0; m < grid.size(); ++m) G.column(m) -= obs.apply(u_low.column(m));

  ReconstructionResult res(Trajectory(model, grid, "reconstruction"));
  res.gramian = problem.report();
  res.residual_bound = 10.0 * config.fix_tol * res.gramian.obs_constant;

  Trajectory W(model, grid);
  Trajectory source(model, grid);
  int non_contracting = 0;
  for (int it = 1; it <= config.max_iters; ++it) {
    for (int m = 0; m < grid.size(); ++m) {
      const Eigen::VectorXd low = u_low.column(m);
      const Eigen::VectorXd w = W.column(m);
      Eigen::VectorXd h = F.apply(low + w);
      if (linearized) h -= F.derivative(low, w);
      detail::mask_modes(*model, h, n, false);
      source.column(m) = h;
    }
    Trajectory next = problem.solve(F.is_zero() ? nullptr : &source, G);
    const double d = sup_distance(next, W, scale);
    W = std::move(next);
    res.iterations = it;
    if (!res.increments.empty()) {
      const double ratio = res.increments.back() > 0.0
                               ? d / res.increments.back()
                               : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      res.contraction_estimates.push_back(ratio);
      non_contracting = ratio >= 1.0 ? non_contracting + 1 : 0;
    }
    res.increments.push_back(d);
    if (std::isfinite(config.ball_radius) && sup_norm(W, scale) > config.ball_radius) {
      res.status = ReconstructionStatus::ball_exit;
      break;
    }
    // With F = 0 the Picard map is constant: the first iterate is the fixed point.
    if (F.is_zero() || d <= config.fix_tol) {
      res.status = ReconstructionStatus::converged;
      res.converged = true;
      break;
    }
    if (non_contracting >= 3) {
      res.status = ReconstructionStatus::diverged;
      break;
    }
  }
  res.high_trajectory = W;
  res.high_trajectory.set_integrator_tag(linearized ? "reconstruction-linearized"
                                                    : "reconstruction");

  Trajectory misfit(model, grid);
  for (int m = 0; m < grid.size(); ++m)
    misfit.column(m) = obs.apply(W.column(m)) - G.column(m);
  res.raw_observation_misfit = problem.time_norm(misfit);
  res.residual_observation = problem.time_norm(problem.project(misfit));
  return res;
}

struct GainReport {
  /// sup ||F(s)||_{sigma+eps} / max(1, ||s||_sigma) over the samples.
  double ratio_sup = 0.0;
  /// sup ||F(s)||_{sigma+eps} over the samples.
  double raw_sup = 0.0;
  int samples = 0;
};

/// Samples states on the sphere ||s||_sigma = sample_radius: every single-mode
/// direction plus `random_samples` Gaussian directions in X^sigma-euclidean
/// coordinates.
inline GainReport gain_probe(const NonlinearOperator& F, double sigma, double eps,
                             double sample_radius, int random_samples = 64,
                             std::uint64_t seed = 1) {
  detail::require(eps > 0.0, "gain_probe: eps must be > 0");
  detail::require(sample_radius > 0.0, "gain_probe: sample_radius must be > 0");
  const ModelPtr& model = F.model();
  const SobolevScale base(model, sigma), smooth(model, sigma + eps);
  const int dim = model->dim();
  const Eigen::VectorXd inv = base.weights().cwiseSqrt().cwiseInverse();
  GainReport r;
  Rng rng(seed);
  auto probe = [&](Eigen::VectorXd w) {
    const double len = w.norm();
    if (len == 0.0) return;
    const Eigen::VectorXd s = inv.cwiseProduct(w) * (sample_radius / len);
    const double value = smooth.norm(F.apply(s));
    r.raw_sup = std::max(r.raw_sup, value);
    r.ratio_sup = std::max(r.ratio_sup, value / std::max(1.0, base.norm(s)));
    ++r.samples;
  };
  for (int k = 0; k < dim; ++k) probe(Eigen::VectorXd::Unit(dim, k));
  for (int i = 0; i < random_samples; ++i) {
    Eigen::VectorXd w(dim);
    for (int k = 0; k < dim; ++k) w(k) = rng.normal();
    probe(w);
  }
  return r;
}

/// Smallest frequency n with c_obs gain (1 + n^2)^{-eps/2} <= 1: above it
/// Q_n F (sigma -> sigma) is smaller than the inverse observability constant.
inline double predicted_threshold(double obs_constant, double gain, double eps) {
  detail::require(eps > 0.0, "predicted_threshold: eps must be > 0");
  if (!(obs_constant * gain > 0.0)) return 0.0;
  const double v = std::pow(obs_constant * gain, 2.0 / eps) - 1.0;
  return std::sqrt(std::max(0.0, v));
}

}  // namespace modalrecon
