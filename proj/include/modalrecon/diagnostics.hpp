#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "modalrecon/error.hpp"
#include "modalrecon/integrators.hpp"
#include "modalrecon/low_ode.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/random.hpp"
#include "modalrecon/reconstruction.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

// ---------------------------------------------------------------------------
// Time analyticity

struct AnalyticityReport {
  double eval_time = 0.0;
  int K = 0;
  std::vector<double> derivative_norms;
  double radius_estimate = 0.0;  ///< +inf when the fit looks entire
  double fit_slope = 0.0;
  double fit_quality = 0.0;  ///< R^2 of the tail fit
  bool entire = false;
  bool localized = false;
};

/// Fits log(norms[j] / j!) = a + b j over j in [K/2, K] and returns
/// rho = exp(-b), or +inf when b < -ln(1e6)/K.
inline AnalyticityReport radius_from_norms(const std::vector<double>& norms) {
  const int K = static_cast<int>(norms.size()) - 1;
  detail::require(K >= 8, "analyticity: K must be >= 8");
  AnalyticityReport r;
  r.K = K;
  r.derivative_norms = norms;
  for (double v : norms)
    detail::require(std::isfinite(v) && v >= 0.0, "analyticity: derivative norms must be finite");
  const int j0 = K / 2;
  if (norms[j0] == 0.0 || norms[K] == 0.0) {
    // Vanishing tail: a polynomial in time.
    r.entire = true;
    r.radius_estimate = std::numeric_limits<double>::infinity();
    r.fit_slope = -std::numeric_limits<double>::infinity();
    r.fit_quality = 1.0;
    return r;
  }
  std::vector<double> xs, ys;
  for (int j = j0; j <= K; ++j) {
    if (norms[j] <= 0.0) continue;
    xs.push_back(j);
    ys.push_back(std::log(norms[j]) - std::lgamma(j + 1.0));
  }
  const double cnt = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= cnt;
  my /= cnt;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double b = sxy / sxx;
  r.fit_slope = b;
  // A constant log sequence is fitted exactly.
  r.fit_quality = syy <= 1e-300 ? 1.0 : (sxy * sxy) / (sxx * syy);
  if (b < -std::log(1e6) / K) {
    r.entire = true;
    r.radius_estimate = std::numeric_limits<double>::infinity();
  } else {
    r.radius_estimate = std::exp(-b);
  }
  return r;
}

/// Cauchy-Hadamard estimate of the time-analyticity radius at s from the
/// exact time derivatives D_j. With `chi` the norms are those of (chi a, chi b)
/// (chi applied to every component by its modal matrix).
inline AnalyticityReport analyticity_radius(const NonlinearOperator& F, const State& s,
                                            double sigma, int K,
                                            const CutoffProfile* chi = nullptr,
                                            double eval_time = 0.0) {
  detail::require(K >= 8 && K <= 40, "analyticity_radius: K must lie in [8, 40]");
  const ModelPtr& model = F.model();
  s.check_same(State(model));
  const SobolevScale scale(model, sigma);
  const int n = model->n_modes();
  Eigen::MatrixXd B;
  if (chi) B = cutoff_modal_matrix(*model, *chi);
  // Taylor coefficients U_j = D_j / j! keep the recursion in range; the norms
  // are rescaled by j! in log space only.
  const auto U = F.taylor_coefficients(s.coords(), K);
  std::vector<double> norms(K + 1);
  for (int j = 0; j <= K; ++j) {
    Eigen::VectorXd c = U[j];
    if (chi) {
      c.head(n) = B * U[j].head(n);
      c.tail(n) = B * U[j].tail(n);
    }
    const double nrm = scale.norm(c);
    norms[j] = nrm == 0.0 ? 0.0 : std::exp(std::log(nrm) + std::lgamma(j + 1.0));
  }
  AnalyticityReport r = radius_from_norms(norms);
  r.eval_time = eval_time;
  r.localized = chi != nullptr;
  return r;
}

// ---------------------------------------------------------------------------
// Energy and stationary states

/// wave/plate: (1/2)|v|^2 + (1/2) <(L + beta) u, u> + int V(u), V' = f.
/// nls: (1/2) sum mu_k |c_k|^2 + (1/2) int P(|u|^2).
inline double energy(const NonlinearOperator& F, const Eigen::Ref<const Eigen::VectorXd>& coords) {
  const ModelOperator& m = *F.model();
  const int n = m.n_modes();
  const Eigen::ArrayXd mu = m.mode_frequencies().array();
  double quad;
  if (m.second_order())
    quad = 0.5 * ((mu.square() * coords.head(n).array().square()).sum() +
                  coords.tail(n).squaredNorm());
  else
    quad = 0.5 * (mu * (coords.head(n).array().square() + coords.tail(n).array().square())).sum();
  return quad + F.potential(coords);
}

inline double energy(const NonlinearOperator& F, const State& s) {
  s.check_same(State(F.model()));
  return energy(F, s.coords());
}

/// L2 mass sum |coords|^2 of an nls state (its field norm squared).
inline double mass(const State& s) { return s.coords().squaredNorm(); }

namespace detail {

/// Raw residual of the stationary equation in the first-component layout:
/// wave/plate r = mu^2 a + P f(u) (N entries); nls r = mu c + P f(u) (2N).
inline Eigen::VectorXd stationary_equation(const NonlinearOperator& F,
                                           const Eigen::Ref<const Eigen::VectorXd>& coords) {
  const ModelOperator& m = *F.model();
  const int n = m.n_modes();
  const Eigen::VectorXd mu = m.mode_frequencies();
  const Eigen::VectorXd Fv = F.apply(coords);
  if (m.second_order())
    return (mu.array().square() * coords.head(n).array()).matrix() - Fv.tail(n);
  Eigen::VectorXd r(2 * n);
  // P f = -F.second + i F.first
  r.head(n) = (mu.array() * coords.head(n).array()).matrix() - Fv.tail(n);
  r.tail(n) = (mu.array() * coords.tail(n).array()).matrix() + Fv.head(n);
  return r;
}

inline Eigen::MatrixXd stationary_jacobian(const NonlinearOperator& F,
                                           const Eigen::Ref<const Eigen::VectorXd>& coords) {
  const ModelOperator& m = *F.model();
  const int n = m.n_modes();
  const Eigen::VectorXd mu = m.mode_frequencies();
  const Eigen::MatrixXd J = F.jacobian(coords);
  if (m.second_order()) {
    Eigen::MatrixXd out = -J.bottomLeftCorner(n, n);
    out.diagonal() += mu.array().square().matrix();
    return out;
  }
  Eigen::MatrixXd out(2 * n, 2 * n);
  out.topRows(n) = -J.bottomRows(n);
  out.bottomRows(n) = J.topRows(n);
  out.diagonal() += (Eigen::VectorXd(2 * n) << mu, mu).finished();
  return out;
}

}  // namespace detail

/// wave/plate: ||mu^2 a + P f(u)||_{H^-1-like} + ||v||, the first norm being
/// (sum r_k^2 / mu_k^2)^{1/2}. nls: (sum |mu c + P f|^2 / (1 + mu))^{1/2}.
/// Zero exactly at the Galerkin stationary states.
inline double stationarity_residual(const NonlinearOperator& F,
                                    const Eigen::Ref<const Eigen::VectorXd>& coords) {
  const ModelOperator& m = *F.model();
  const int n = m.n_modes();
  const Eigen::ArrayXd mu = m.mode_frequencies().array();
  const Eigen::ArrayXd r = detail::stationary_equation(F, coords).array();
  if (m.second_order())
    return std::sqrt((r.square() / mu.square()).sum()) + coords.tail(n).norm();
  const Eigen::ArrayXd w = (Eigen::ArrayXd(2 * n) << 1.0 + mu, 1.0 + mu).finished();
  return std::sqrt((r.square() / w).sum());
}

inline double stationarity_residual(const NonlinearOperator& F, const State& s) {
  s.check_same(State(F.model()));
  return stationarity_residual(F, s.coords());
}

struct StationaryResult {
  Eigen::VectorXd coords;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton on the stationary equation from `guess` (its velocity part is
/// discarded for wave/plate). Backtracks on the residual norm.
inline StationaryResult find_stationary_state(const NonlinearOperator& F,
                                              const Eigen::Ref<const Eigen::VectorXd>& guess,
                                              double tol = 1e-12, int max_iter = 100) {
  const ModelOperator& m = *F.model();
  const int n = m.n_modes();
  const bool second = m.second_order();
  auto embed = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * n);
    if (second)
      c.head(n) = x;
    else
      c = x;
    return c;
  };
  Eigen::VectorXd x = second ? Eigen::VectorXd(guess.head(n)) : Eigen::VectorXd(guess);
  StationaryResult out;
  double res = stationarity_residual(F, embed(x));
  for (int it = 0; it < max_iter && res > tol; ++it) {
    const Eigen::VectorXd c = embed(x);
    const Eigen::VectorXd g = detail::stationary_equation(F, c);
    const Eigen::VectorXd step = detail::stationary_jacobian(F, c).partialPivLu().solve(g);
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      const Eigen::VectorXd trial = x - lambda * step;
      const double tr = stationarity_residual(F, embed(trial));
      if (std::isfinite(tr) && tr < res) {
        x = trial;
        res = tr;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) break;
  }
  out.coords = embed(x);
  out.residual = res;
  out.converged = res <= tol;
  return out;
}

struct StationarySearch {
  std::vector<StationaryResult> runs;
  /// Largest energy-norm of a converged run.
  double largest_converged_norm = 0.0;
  int converged = 0;
};

/// Newton from `starts` random states of energy norm `radius`.
inline StationarySearch search_stationary_states(const NonlinearOperator& F, int starts,
                                                 double radius, std::uint64_t seed,
                                                 double tol = 1e-10) {
  const ModelPtr& model = F.model();
  const SobolevScale energy_scale(model, 0.0);
  Rng rng(seed);
  StationarySearch s;
  const Eigen::VectorXd inv = energy_scale.weights().cwiseSqrt().cwiseInverse();
  for (int i = 0; i < starts; ++i) {
    Eigen::VectorXd w(model->dim());
    for (int k = 0; k < w.size(); ++k) w(k) = rng.normal();
    Eigen::VectorXd c = inv.cwiseProduct(w);
    c *= radius / energy_scale.norm(c);
    StationaryResult r = find_stationary_state(F, c, tol);
    if (r.converged) {
      ++s.converged;
      s.largest_converged_norm = std::max(s.largest_converged_norm, energy_scale.norm(r.coords));
    }
    s.runs.push_back(std::move(r));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Determining modes

struct DeterminingModesOptions {
  /// Truth uses dt / truth_refine with the fourth-order integrator.
  int truth_refine = 4;
  Integrator truth_integrator = Integrator::yoshida4;
  /// Standard deviation of additive Gaussian noise on the observation.
  double noise = 0.0;
  std::uint64_t seed = 1;
  /// Also rebuild the low modes from u0 by the reduced low-mode equation.
  bool run_low_ode = false;
  LowOdeOptions low_ode;
};

struct DeterminingModesReport {
  double threshold_n = 0.0;
  double window = 0.0;
  bool failed = false;
  std::string failure;
  double low_error = 0.0;
  double high_error = std::numeric_limits<double>::quiet_NaN();
  double total_error = std::numeric_limits<double>::quiet_NaN();
  double high_norm = 0.0;
  double relative_high_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> contraction_profile;
  int iterations = 0;
  std::string status;
  double residual_observation = 0.0;
  GramianReport gramian;
  std::optional<Trajectory> truth;
  std::optional<Trajectory> reconstruction;
};

/// Simulates the truth, extracts U_L = P_n U and y = C U, reconstructs
/// U_H and compares. Unobservable configurations come back as a failed
/// report.
inline DeterminingModesReport determining_modes_experiment(
    const ObservationOperator& obs, const NonlinearOperator& F, const SobolevScale& scale,
    const State& u0, double T, double dt, const ReconstructionConfig& config,
    const DeterminingModesOptions& options = {}) {
  const ModelPtr& model = obs.model();
  detail::require(options.truth_refine >= 1, "determining_modes: truth_refine must be >= 1");
  DeterminingModesReport rep;
  rep.threshold_n = config.threshold_n;
  rep.window = obs.window();
  SolveOptions so;
  so.integrator = options.truth_integrator;
  so.record_stride = options.truth_refine;
  const Trajectory truth = nonlinear_solve(F, u0, T, dt / options.truth_refine, so);
  Trajectory low = truth;
  for (int m = 0; m < low.size(); ++m) detail::mask_modes(*model, low.column(m), config.threshold_n, true);
  const Trajectory high = detail::high_part_of(truth, config.threshold_n);
  ObservationRecord y = observe(obs, truth);
  if (options.noise > 0.0) {
    Rng rng(options.seed);
    for (int m = 0; m < y.values.size(); ++m) {
      Eigen::VectorXd noise(model->dim());
      for (int k = 0; k < noise.size(); ++k) noise(k) = options.noise * rng.normal();
      if (model->second_order()) noise.head(model->n_modes()).setZero();
      y.values.column(m) += noise;
    }
  }
  rep.high_norm = sup_norm(high, scale);
  try {
    Trajectory low_used = low;
    if (options.run_low_ode) {
      low_used = reduced_low_ode(obs, F, scale, low.state(0), y, config, T, dt, options.low_ode);
      rep.low_error = sup_distance(low_used, low, scale);
    }
    const ReconstructionResult r = reconstruct_high(obs, F, scale, low_used, y, config);
    rep.gramian = r.gramian;
    rep.contraction_profile = r.contraction_estimates;
    rep.iterations = r.iterations;
    rep.status = std::string(to_string(r.status));
    rep.residual_observation = r.residual_observation;
    rep.high_error = sup_distance(r.high_trajectory, high, scale);
    Trajectory total = low_used;
    total.coords() += r.high_trajectory.coords();
    rep.total_error = sup_distance(total, truth, scale);
    rep.relative_high_error = rep.high_norm > 0.0 ? rep.high_error / rep.high_norm : rep.high_error;
    if (!r.converged) {
      rep.failed = true;
      rep.failure = "reconstruction " + rep.status;
    }
    rep.reconstruction = r.high_trajectory;
  } catch (const UnobservableError& e) {
    rep.failed = true;
    rep.status = "unobservable";
    rep.failure = e.what();
    rep.gramian.min_eig = e.min_eig();
    rep.gramian.max_eig = e.max_eig();
  }
  rep.truth = truth;
  return rep;
}

}  // namespace modalrecon
