#pragma once

// Observability Gramians on a mode subspace S. Internally everything is in
// the normalized packed layout z = [Re zeta_S ; Im zeta_S]; reports use
// X^sigma-euclidean coordinates w = D z with D = (1 + mu^2)^{sigma/2}, where
// ||W0||_sigma = |w| and the observability inequality reads
// |w|^2 <= w^T G w / min_eig.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "modalrecon/error.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/parallel.hpp"
#include "modalrecon/propagation.hpp"
#include "modalrecon/quadrature.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

struct GramianReport {
  ModeSet subspace;
  Eigen::MatrixXd matrix;  ///< 2|S| x 2|S|, X^sigma-euclidean coordinates
  Eigen::VectorXd eigenvalues;
  double min_eig = 0.0;
  double max_eig = 0.0;
  double obs_constant = std::numeric_limits<double>::infinity();
  double condition = std::numeric_limits<double>::infinity();
  bool observable = false;
  double rank_tolerance = 1e-12;
  double window = 0.0;
  double sigma = 0.0;
  int time_nodes = 0;
  std::string quadrature;
  bool smooth_cutoff = true;
};

struct GramianOptions {
  /// 0 selects max(32, ceil(8 T mu_max / 2pi) + 16) Gauss-Legendre nodes.
  int time_nodes = 0;
  double rank_tolerance = 1e-12;
  int threads = 1;
};

namespace detail {

/// Columns of C restricted to the packed subspace S, rows over all modes.
/// Packed column of mode S[i]: Re -> S[i], Im -> n + S[i].
inline Eigen::MatrixXd observed_columns(const ObservationOperator& obs, const ModeSet& S) {
  const int n = obs.model()->n_modes();
  const int d = static_cast<int>(S.size());
  const Eigen::MatrixXd C = obs.normalized_matrix();
  Eigen::MatrixXd Cs(2 * n, 2 * d);
  for (int i = 0; i < d; ++i) {
    Cs.col(i) = C.col(S[i]);
    Cs.col(d + i) = C.col(n + S[i]);
  }
  return Cs;
}

/// X^sigma weights of the observed value over all modes (2N entries).
inline Eigen::VectorXd observation_weights(const SobolevScale& scale) {
  const Eigen::Index n = scale.mode_weights().size();
  Eigen::VectorXd w(2 * n);
  w << scale.mode_weights(), scale.mode_weights();
  return w;
}

/// Q = C_S^T S_sigma C_S.
inline Eigen::MatrixXd observed_form(const ObservationOperator& obs, const SobolevScale& scale,
                                     const ModeSet& S) {
  const Eigen::MatrixXd Cs = observed_columns(obs, S);
  return Cs.transpose() * observation_weights(scale).asDiagonal() * Cs;
}

inline Eigen::VectorXd subspace_frequencies(const ModelOperator& m, const ModeSet& S) {
  Eigen::VectorXd mu(S.size());
  for (std::size_t i = 0; i < S.size(); ++i) mu(i) = m.mode_frequencies()(S[i]);
  return mu;
}

/// X^sigma weights D on the packed subspace (2|S| entries).
inline Eigen::VectorXd packed_scale(const SobolevScale& scale, const ModeSet& S) {
  const int d = static_cast<int>(S.size());
  Eigen::VectorXd D(2 * d);
  for (int i = 0; i < d; ++i) D(i) = D(d + i) = std::sqrt(scale.mode_weights()(S[i]));
  return D;
}

/// sum_q w_q R(t_q)^T Q R(t_q), R(t) the packed rotation by exp(-i mu t).
/// Each column of R has two nonzeros, so every term costs O(d^2). Nodes are
/// processed in fixed chunks summed in order: the result does not depend on
/// the thread count.
inline Eigen::MatrixXd rotation_gramian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& Q,
                                        const Eigen::VectorXd& nodes,
                                        const Eigen::VectorXd& weights, int threads) {
  const int d = static_cast<int>(mu.size());
  const int d2 = 2 * d;
  // Q re-indexed by the mode of each packed index: Qxy(i, j) = Q(x(p_i), y(p_j)).
  Eigen::MatrixXd Q11(d2, d2), Q12(d2, d2), Q21(d2, d2), Q22(d2, d2);
  for (int i = 0; i < d2; ++i) {
    const int p = i % d;
    for (int j = 0; j < d2; ++j) {
      const int q = j % d;
      Q11(i, j) = Q(p, q);
      Q12(i, j) = Q(p, d + q);
      Q21(i, j) = Q(d + p, q);
      Q22(i, j) = Q(d + p, d + q);
    }
  }
  constexpr int chunk = 512;
  const int count = static_cast<int>(nodes.size());
  const int chunks = (count + chunk - 1) / chunk;
  std::vector<Eigen::MatrixXd> parts(chunks);
  parallel_for(chunks, threads, [&](int c) {
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(d2, d2);
    Eigen::ArrayXd alpha(d2), beta(d2);
    const int end = std::min(count, (c + 1) * chunk);
    for (int g = c * chunk; g < end; ++g) {
      for (int p = 0; p < d; ++p) {
        const double cs = std::cos(mu(p) * nodes(g));
        const double sn = std::sin(mu(p) * nodes(g));
        // column Re_p = cs e_p - sn e_{d+p}; column Im_p = sn e_p + cs e_{d+p}
        alpha(p) = cs;
        beta(p) = -sn;
        alpha(d + p) = sn;
        beta(d + p) = cs;
      }
      const Eigen::ArrayXXd aa = (alpha.matrix() * alpha.matrix().transpose()).array();
      const Eigen::ArrayXXd ab = (alpha.matrix() * beta.matrix().transpose()).array();
      const Eigen::ArrayXXd bb = (beta.matrix() * beta.matrix().transpose()).array();
      acc += weights(g) * (aa * Q11.array() + ab * Q12.array() + ab.transpose() * Q21.array() +
                           bb * Q22.array());
    }
    parts[c] = acc.matrix();
  });
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d2, d2);
  for (const auto& p : parts) G += p;
  return 0.5 * (G + G.transpose());
}

/// Builds the report from a Gramian in normalized packed coordinates.
inline GramianReport finish_report(const Eigen::MatrixXd& G_norm, const SobolevScale& scale,
                                   const ModeSet& S, double rank_tolerance) {
  GramianReport r;
  r.subspace = S;
  r.sigma = scale.sigma();
  r.rank_tolerance = rank_tolerance;
  const Eigen::VectorXd Dinv = packed_scale(scale, S).cwiseInverse();
  r.matrix = Dinv.asDiagonal() * G_norm * Dinv.asDiagonal();
  r.matrix = 0.5 * (r.matrix + r.matrix.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.matrix, Eigen::EigenvaluesOnly);
  r.eigenvalues = es.eigenvalues();
  r.min_eig = r.eigenvalues.minCoeff();
  r.max_eig = r.eigenvalues.maxCoeff();
  r.observable = r.max_eig > 0.0 && r.min_eig >= rank_tolerance * r.max_eig;
  if (r.observable) {
    r.obs_constant = 1.0 / std::sqrt(r.min_eig);
    r.condition = r.max_eig / r.min_eig;
  }
  return r;
}

inline int default_time_nodes(double T, double mu_max) {
  return std::max(32, static_cast<int>(std::ceil(8.0 * T * mu_max / (2.0 * M_PI))) + 16);
}

}  // namespace detail

/// G = int_0^T (C e^{tA})^T S_sigma (C e^{tA}) dt on the subspace, by
/// Gauss-Legendre in time.
inline GramianReport gramian(const ObservationOperator& obs, const SobolevScale& scale,
                             const ModeSet& subspace, const GramianOptions& options = {}) {
  const ModelOperator& m = *obs.model();
  detail::require(scale.model() == obs.model(), "gramian: scale built over another model");
  detail::check_mode_set(m, subspace, "gramian");
  const double T = obs.window();
  const Eigen::VectorXd mu = detail::subspace_frequencies(m, subspace);
  const int nodes = options.time_nodes > 0 ? options.time_nodes
                                           : detail::default_time_nodes(T, mu.maxCoeff());
  const QuadratureRule q = gauss_legendre(nodes, 0.0, T);
  const Eigen::MatrixXd Q = detail::observed_form(obs, scale, subspace);
  const Eigen::MatrixXd G = detail::rotation_gramian(mu, Q, q.nodes, q.weights, options.threads);
  GramianReport r = detail::finish_report(G, scale, subspace, options.rank_tolerance);
  r.window = T;
  r.time_nodes = nodes;
  r.quadrature = "gauss-legendre(" + std::to_string(nodes) + ")";
  r.smooth_cutoff = obs.smooth();
  return r;
}

/// Gramian for the discrete inner product sum_m w_m <., .>_sigma on a
/// uniform time grid (fourth-order Gregory weights). This is the form whose
/// normal equations the observation problem solves.
inline GramianReport discrete_gramian(const ObservationOperator& obs, const SobolevScale& scale,
                                      const ModeSet& subspace, const TimeGrid& grid,
                                      double rank_tolerance = 1e-12, int threads = 1) {
  const ModelOperator& m = *obs.model();
  detail::require(scale.model() == obs.model(), "discrete_gramian: scale built over another model");
  detail::check_mode_set(m, subspace, "discrete_gramian");
  Eigen::VectorXd t(grid.size());
  for (int i = 0; i < grid.size(); ++i) t(i) = i * grid.dt;
  const Eigen::VectorXd w = uniform_grid_weights(grid.size(), grid.dt);
  const Eigen::MatrixXd Q = detail::observed_form(obs, scale, subspace);
  const Eigen::MatrixXd G =
      detail::rotation_gramian(detail::subspace_frequencies(m, subspace), Q, t, w, threads);
  GramianReport r = detail::finish_report(G, scale, subspace, rank_tolerance);
  r.window = grid.span();
  r.time_nodes = grid.size();
  r.quadrature = "gregory4(" + std::to_string(grid.size()) + ")";
  r.smooth_cutoff = obs.smooth();
  return r;
}

namespace detail {

/// Per-node generator perturbation Q_n DF(V(t_m)) restricted to the packed
/// normalized coordinates of S: J_hat = N J_raw N^{-1}, N = diag(s_S, 1).
inline std::vector<Eigen::MatrixXd> linearized_blocks(const NonlinearOperator& F,
                                                      const Trajectory& background,
                                                      const ModeSet& S) {
  const ModelOperator& m = *F.model();
  const int d = static_cast<int>(S.size());
  Eigen::VectorXd N(2 * d);
  for (int i = 0; i < d; ++i) {
    N(i) = m.normalization()(S[i]);
    N(d + i) = 1.0;
  }
  std::vector<Eigen::MatrixXd> J(background.size());
  for (int k = 0; k < background.size(); ++k) {
    J[k] = N.asDiagonal() * F.jacobian_block(background.column(k), S) *
           N.cwiseInverse().asDiagonal();
  }
  return J;
}

}  // namespace detail

/// Gramian of the nonautonomous flow dW/dt = A W + Q_n DF(V(t)) W on the
/// high subspace, V the background, assembled with the background's grid
/// quadrature. Columns are propagated by the exponential Adams-Moulton
/// scheme of LinearizedPropagator over all modes mu > n; the Gramian is
/// reported on `subspace`.
inline GramianReport linearized_gramian(const ObservationOperator& obs, const SobolevScale& scale,
                                        const NonlinearOperator& F, const Trajectory& background,
                                        double n, const ModeSet& subspace,
                                        double rank_tolerance = 1e-12) {
  const ModelPtr& model = obs.model();
  detail::require(background.model() == model && F.model() == model,
                  "linearized_gramian: background or nonlinearity built over another model");
  detail::require(background.grid().steps >= 1, "linearized_gramian: background needs >= 2 nodes");
  detail::check_mode_set(*model, subspace, "linearized_gramian");
  const ModeSet H = high_modes(*model, n);
  for (int k : subspace)
    detail::require(std::find(H.begin(), H.end(), k) != H.end(),
                    "linearized_gramian: subspace must lie in the modes mu > n");
  const int h = static_cast<int>(H.size());
  const int d = static_cast<int>(subspace.size());
  // Embedding of the packed subspace into the packed high space.
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * h, 2 * d);
  for (int i = 0; i < d; ++i) {
    const int pos = static_cast<int>(std::find(H.begin(), H.end(), subspace[i]) - H.begin());
    E(pos, i) = 1.0;
    E(h + pos, d + i) = 1.0;
  }
  const LinearizedPropagator prop(*model, background.grid(), H,
                                  detail::linearized_blocks(F, background, H));
  const auto Phi = prop.propagate(E);
  const Eigen::MatrixXd Q = detail::observed_form(obs, scale, H);
  const Eigen::VectorXd w = uniform_grid_weights(background.size(), background.step_size());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  for (int k = 0; k < background.size(); ++k) G += w(k) * Phi[k].transpose() * Q * Phi[k];
  G = 0.5 * (G + G.transpose());
  GramianReport r = detail::finish_report(G, scale, subspace, rank_tolerance);
  r.window = background.grid().span();
  r.time_nodes = background.size();
  r.quadrature = "gregory4(" + std::to_string(background.size()) + ")+exp-adams-moulton4";
  r.smooth_cutoff = obs.smooth();
  return r;
}

}  // namespace modalrecon
