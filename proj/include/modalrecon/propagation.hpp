#pragma once

// Exact modal flow e^{tA}, fourth-order exponential quadrature for the
// Duhamel integral of sampled sources, and the propagator of the
// nonautonomous linear system z' = -i mu z + J(t) z + h(t) on a mode subset.

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "modalrecon/error.hpp"
#include "modalrecon/parallel.hpp"
#include "modalrecon/quadrature.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

/// e^{tA} on raw coordinates.
inline Eigen::VectorXd propagate_coords(const ModelOperator& m,
                                        const Eigen::Ref<const Eigen::VectorXd>& coords,
                                        double t) {
  Eigen::VectorXcd z = to_normalized(m, coords);
  const Eigen::VectorXd& mu = m.mode_frequencies();
  for (int k = 0; k < m.n_modes(); ++k) z(k) *= std::polar(1.0, -mu(k) * t);
  return from_normalized(m, z);
}

inline State linear_propagate(const ModelPtr& model, const State& w0, double t) {
  w0.check_same(State(model));
  return State(model, propagate_coords(*model, w0.coords(), t));
}

namespace detail {

/// Real layout of normalized coordinates restricted to a mode set S:
/// [Re zeta_S ; Im zeta_S].
inline Eigen::VectorXd pack_normalized(const ModelOperator& m,
                                       const Eigen::Ref<const Eigen::VectorXd>& coords,
                                       const ModeSet& S) {
  const int n = m.n_modes();
  const int d = static_cast<int>(S.size());
  Eigen::VectorXd v(2 * d);
  for (int i = 0; i < d; ++i) {
    v(i) = m.normalization()(S[i]) * coords(S[i]);
    v(d + i) = coords(n + S[i]);
  }
  return v;
}

inline void unpack_normalized(const ModelOperator& m, const Eigen::Ref<const Eigen::VectorXd>& v,
                              const ModeSet& S, Eigen::Ref<Eigen::VectorXd> coords) {
  const int n = m.n_modes();
  const int d = static_cast<int>(S.size());
  coords.setZero();
  for (int i = 0; i < d; ++i) {
    coords(S[i]) = v(i) / m.normalization()(S[i]);
    coords(n + S[i]) = v(d + i);
  }
}

}  // namespace detail

/// Per-mode weights of the exponential quadrature
///   int_0^dt e^{-i mu (dt - tau)} p(tau) d tau
/// for p the Lagrange interpolant of source samples on a stencil of
/// q in {2, 3, 4} consecutive nodes starting `offset` nodes before the
/// interval start (offset in [-(q-2), 0]).
class ExponentialWeights {
 public:
  ExponentialWeights(Eigen::VectorXd frequencies, double dt)
      : mu_(std::move(frequencies)), dt_(dt) {
    detail::require(dt > 0.0, "ExponentialWeights: dt must be > 0");
    rotation_.resize(mu_.size());
    for (Eigen::Index k = 0; k < mu_.size(); ++k) rotation_(k) = std::polar(1.0, -mu_(k) * dt_);
    for (int q = 1; q <= 4; ++q)
      for (int offset = 0; offset >= std::min(0, -(q - 2)); --offset)
        table_.emplace(key(q, offset), build(q, offset));
  }

  double dt() const { return dt_; }
  const Eigen::VectorXd& frequencies() const { return mu_; }
  const Eigen::VectorXcd& rotation() const { return rotation_; }

  /// Columns i = 0..q-1: weight of the stencil node i for every mode.
  const Eigen::MatrixXcd& weights(int q, int offset) const {
    auto it = table_.find(key(q, offset));
    if (it == table_.end()) throw ValidationError("ExponentialWeights: unsupported stencil");
    return it->second;
  }

 private:
  Eigen::VectorXd mu_;
  double dt_;
  Eigen::VectorXcd rotation_;
  std::map<int, Eigen::MatrixXcd> table_;

  static int key(int q, int offset) { return q * 8 - offset; }

  Eigen::MatrixXcd build(int q, int offset) const {
    Eigen::MatrixXcd W(mu_.size(), q);
    for (Eigen::Index k = 0; k < mu_.size(); ++k) {
      const double phase = std::abs(mu_(k)) * dt_;
      const int nodes = 12 + 2 * static_cast<int>(std::ceil(phase));
      const QuadratureRule gl = gauss_legendre(nodes, 0.0, 1.0);
      for (int i = 0; i < q; ++i) {
        std::complex<double> acc = 0.0;
        for (int g = 0; g < nodes; ++g) {
          const double s = gl.nodes(g);
          double ell = 1.0;
          for (int j = 0; j < q; ++j)
            if (j != i) ell *= (s - (offset + j)) / static_cast<double>(i - j);
          acc += gl.weights(g) * ell * std::polar(1.0, -mu_(k) * dt_ * (1.0 - s));
        }
        W(k, i) = acc * dt_;
      }
    }
    return W;
  }
};

namespace detail {

/// Explicit Duhamel sweep in normalized coordinates: z(t_m) = e^{t_m A} z0 +
/// int_0^{t_m} e^{(t_m - s)A} h(s) ds, h given by samples (N x (M+1)),
/// centered cubic interpolation (one-sided at the ends).
inline Eigen::MatrixXcd duhamel_normalized(const ExponentialWeights& ew,
                                           const Eigen::VectorXcd& z0,
                                           const Eigen::MatrixXcd* source, int steps) {
  const Eigen::Index n = z0.size();
  Eigen::MatrixXcd Z(n, steps + 1);
  // The free part is evaluated in closed form at every node; only the
  // forced part is swept.
  for (int m = 0; m <= steps; ++m)
    for (Eigen::Index k = 0; k < n; ++k)
      Z(k, m) = z0(k) * std::polar(1.0, -ew.frequencies()(k) * (m * ew.dt()));
  if (!source) return Z;
  Eigen::VectorXcd p = Eigen::VectorXcd::Zero(n);
  const int q = std::min(4, steps + 1);
  for (int m = 0; m < steps; ++m) {
    p = ew.rotation().cwiseProduct(p);
    const int start = std::clamp(m - 1, 0, steps + 1 - q);
    const Eigen::MatrixXcd& W = ew.weights(q, start - m);
    for (int i = 0; i < q; ++i) p += W.col(i).cwiseProduct(source->col(start + i));
    Z.col(m + 1) += p;
  }
  return Z;
}

inline Eigen::MatrixXcd normalize_columns(const ModelOperator& m, const Eigen::MatrixXd& raw) {
  Eigen::MatrixXcd out(m.n_modes(), raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) out.col(c) = to_normalized(m, raw.col(c));
  return out;
}

}  // namespace detail

/// W(t_m) = e^{t_m A} w0 + int_0^{t_m} e^{(t_m - s)A} H(s) ds with H given by
/// its samples on `grid`; fourth order in dt.
inline Trajectory duhamel_integrate(const ModelPtr& model, const State& w0,
                                    const Trajectory& source, const TimeGrid& grid) {
  w0.check_same(State(model));
  detail::require(source.model() == model, "duhamel_integrate: source built over another model");
  detail::require(source.grid().matches(grid), "duhamel_integrate: source grid mismatch");
  ExponentialWeights ew(model->mode_frequencies(), grid.dt > 0 ? grid.dt : 1.0);
  const Eigen::MatrixXcd h = detail::normalize_columns(*model, source.coords());
  const Eigen::MatrixXcd Z =
      detail::duhamel_normalized(ew, to_normalized(*model, w0.coords()), &h, grid.steps);
  Trajectory out(model, grid, "duhamel-exp4");
  for (int m = 0; m < grid.size(); ++m) out.column(m) = from_normalized(*model, Z.col(m));
  return out;
}

/// Propagator of z' = -i mu z + J(t) z + h(t) on the packed real layout of a
/// mode set S. J is given at every grid node as a 2d x 2d matrix; the scheme
/// is exponential Adams-Moulton with cubic interpolation of J z + h
/// (trapezoid / quadratic on the first two steps), fourth order in dt, and
/// exact for J = 0, h = 0.
class LinearizedPropagator {
 public:
  LinearizedPropagator(const ModelOperator& m, TimeGrid grid, ModeSet space,
                       std::vector<Eigen::MatrixXd> J)
      : grid_(grid), space_(std::move(space)), J_(std::move(J)) {
    const int d = static_cast<int>(space_.size());
    detail::require(static_cast<int>(J_.size()) == grid_.size(),
                    "LinearizedPropagator: one Jacobian per grid node required");
    for (const auto& j : J_)
      detail::require(j.rows() == 2 * d && j.cols() == 2 * d,
                      "LinearizedPropagator: Jacobian has wrong shape");
    Eigen::VectorXd mu(d);
    for (int i = 0; i < d; ++i) mu(i) = m.mode_frequencies()(space_[i]);
    weights_ = std::make_unique<ExponentialWeights>(mu, grid_.dt > 0 ? grid_.dt : 1.0);
  }

  const TimeGrid& grid() const { return grid_; }
  const ModeSet& space() const { return space_; }
  int dim() const { return 2 * static_cast<int>(space_.size()); }

  /// Propagates the columns of Z0 (2d x c). `source` (2d x (M+1), packed
  /// normalized) is added to every column when given; pass a single column
  /// with a source for the particular solution. Returns one 2d x c block per node.
  std::vector<Eigen::MatrixXd> propagate(const Eigen::MatrixXd& Z0,
                                         const Eigen::MatrixXd* source = nullptr) const {
    const int d2 = dim();
    const int d = d2 / 2;
    detail::require(Z0.rows() == d2, "LinearizedPropagator: initial block has wrong rows");
    const int steps = grid_.steps;
    std::vector<Eigen::MatrixXd> Z(steps + 1);
    std::vector<Eigen::MatrixXd> g(steps + 1);  // J z + h at each node
    Z[0] = Z0;
    auto forcing = [&](int m) {
      Eigen::MatrixXd out = J_[m] * Z[m];
      if (source) out.colwise() += source->col(m);
      return out;
    };
    g[0] = forcing(0);
    const Eigen::VectorXcd& rot = weights_->rotation();
    for (int m = 0; m < steps; ++m) {
      const int q = std::min(4, m + 2);
      const int start = m + 2 - q;
      const Eigen::MatrixXcd& W = weights_->weights(q, start - m);
      Eigen::MatrixXd rhs = apply_complex_diag(rot, Z[m]);
      for (int i = 0; i + 1 < q; ++i) rhs += apply_complex_diag(W.col(i), g[start + i]);
      const Eigen::VectorXcd& wl = W.col(q - 1);
      if (source) {
        const Eigen::VectorXd last = apply_complex_diag(wl, source->col(m + 1));
        rhs.colwise() += last;
      }
      // (I - Omega_last J_{m+1}) z_{m+1} = rhs
      Eigen::MatrixXd lhs = -complex_diag_matrix(wl, d) * J_[m + 1];
      lhs.diagonal().array() += 1.0;
      Z[m + 1] = lhs.partialPivLu().solve(rhs);
      g[m + 1] = forcing(m + 1);
      if (m >= 3) g[m - 3].resize(0, 0);
    }
    return Z;
  }

 private:
  static Eigen::MatrixXd apply_complex_diag(const Eigen::VectorXcd& w, const Eigen::MatrixXd& v) {
    const Eigen::Index d = w.size();
    Eigen::MatrixXd out(v.rows(), v.cols());
    out.topRows(d) = w.real().asDiagonal() * v.topRows(d) - w.imag().asDiagonal() * v.bottomRows(d);
    out.bottomRows(d) = w.imag().asDiagonal() * v.topRows(d) + w.real().asDiagonal() * v.bottomRows(d);
    return out;
  }
  static Eigen::MatrixXd complex_diag_matrix(const Eigen::VectorXcd& w, int d) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    M.topLeftCorner(d, d).diagonal() = w.real();
    M.topRightCorner(d, d).diagonal() = -w.imag();
    M.bottomLeftCorner(d, d).diagonal() = w.imag();
    M.bottomRightCorner(d, d).diagonal() = w.real();
    return M;
  }

  TimeGrid grid_;
  ModeSet space_;
  std::vector<Eigen::MatrixXd> J_;
  std::unique_ptr<ExponentialWeights> weights_;
};

}  // namespace modalrecon
