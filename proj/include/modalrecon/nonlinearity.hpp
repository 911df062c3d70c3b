#pragma once

// Polynomial nonlinearities evaluated pointwise on a dealiased grid.
//
// Sign convention (used everywhere in the library): every model is written
// as dU/dt = A U + F(U) with
//   wave  : u_tt - Lap u + beta u + f(u) = 0   ->  F(u, v) = (0, -f(u))
//   plate : u_tt + Lap^2 u + beta u + f(u) = 0 ->  F(u, v) = (0, -f(u))
//   nls   : i u_t + Lap u - beta u = f(u)      ->  F(u)    = -i f(u)
// so e^{tA} multiplies the nls mode k by exp(-i mu_k t). All F values are
// Galerkin projections onto the N retained modes.
//
// For nls, f(u) = P'(|u|^2) u and F is only real-linear in u; its
// derivative DF is returned as a real-linear map on (Re, Im) coordinates.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/spectral.hpp"

namespace modalrecon {

struct Nonlinearity {
  /// wave/plate: coefficients[j] multiplies u^j (coefficients[0] must be 0).
  /// nls: coefficients[j] multiplies r^j in P'(r), i.e. f(u) = sum_j c_j |u|^{2j} u.
  std::vector<double> coefficients;
  std::optional<double> defocusing_gamma;

  bool is_zero() const {
    return std::all_of(coefficients.begin(), coefficients.end(),
                       [](double c) { return c == 0.0; });
  }

  /// Degree of f as a polynomial in (u, conj u).
  int degree(Variant v) const {
    int top = -1;
    for (int j = 0; j < static_cast<int>(coefficients.size()); ++j)
      if (coefficients[j] != 0.0) top = j;
    if (top < 0) return 0;
    return v == Variant::nls ? 2 * top + 1 : top;
  }
};

namespace detail {

inline double poly(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

inline double poly_derivative(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= 1; --j) acc = acc * x + j * c[j];
  return acc;
}

/// Antiderivative vanishing at 0.
inline double poly_integral(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= 0; --j)
    acc = acc * x + c[j] / (j + 1);
  return acc * x;
}

}  // namespace detail

/// Validates f(0) = 0 and, when gamma is given, s f(s) >= gamma s^2 on a
/// sample grid of s in [-10, 10].
inline Nonlinearity make_nonlinearity(Variant variant, std::vector<double> coefficients,
                                      std::optional<double> defocusing_gamma = std::nullopt) {
  for (double c : coefficients)
    detail::require(std::isfinite(c), "nonlinearity: coefficients must be finite");
  if (variant != Variant::nls && !coefficients.empty())
    detail::require(coefficients[0] == 0.0,
                    "nonlinearity: f(0) must vanish (coefficients[0] = 0)");
  Nonlinearity nl{std::move(coefficients), defocusing_gamma};
  if (defocusing_gamma) {
    const double gamma = *defocusing_gamma;
    detail::require(std::isfinite(gamma) && gamma >= 0.0,
                    "nonlinearity: defocusing gamma must be >= 0");
    constexpr int samples = 2001;
    constexpr double range = 10.0;
    for (int i = 0; i < samples; ++i) {
      const double s = -range + 2.0 * range * i / (samples - 1);
      const double fs = variant == Variant::nls ? detail::poly(nl.coefficients, s * s) * s
                                                : detail::poly(nl.coefficients, s);
      const double lhs = s * fs;
      if (lhs < gamma * s * s - 1e-12 * (1.0 + std::abs(lhs)))
        throw ValidationError("nonlinearity: defocusing condition s f(s) >= gamma s^2 fails at s = " +
                              std::to_string(s));
    }
  }
  return nl;
}

/// F, DF, the potential and the Taylor recursion for one (model, f) pair.
/// Holds an oversampled copy of the basis table; build once and reuse.
class NonlinearOperator {
 public:
  NonlinearOperator(ModelPtr model, Nonlinearity nl)
      : model_(std::move(model)), nl_(std::move(nl)) {
    const int deg = nl_.degree(model_->variant());
    const int base = model_->grid_size();
    const int size = std::max(base, static_cast<int>(std::ceil(0.5 * (deg + 1) * base)));
    grid_ = model_->make_grid(size);
    table_ = model_->evaluate_basis(grid_.nodes);
    analysis_ = table_ * grid_.weights.asDiagonal();
  }

  const ModelPtr& model() const { return model_; }
  const Nonlinearity& nonlinearity() const { return nl_; }
  bool is_zero() const { return nl_.is_zero(); }
  const QuadratureRule& grid() const { return grid_; }

  /// F(U) in raw coordinates.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& coords) const {
    const int n = model_->n_modes();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * n);
    if (is_zero()) return out;
    const auto& c = nl_.coefficients;
    if (model_->second_order()) {
      Eigen::VectorXd u = table_.transpose() * coords.head(n);
      for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = detail::poly(c, u(j));
      out.tail(n).noalias() = -(analysis_ * u);
    } else {
      Eigen::VectorXd ux = table_.transpose() * coords.head(n);
      Eigen::VectorXd uy = table_.transpose() * coords.tail(n);
      for (Eigen::Index j = 0; j < ux.size(); ++j) {
        const double g = detail::poly(c, ux(j) * ux(j) + uy(j) * uy(j));
        ux(j) *= g;
        uy(j) *= g;
      }
      out.head(n).noalias() = analysis_ * uy;
      out.tail(n).noalias() = -(analysis_ * ux);
    }
    return out;
  }

  /// DF(base) dir.
  Eigen::VectorXd derivative(const Eigen::Ref<const Eigen::VectorXd>& base,
                             const Eigen::Ref<const Eigen::VectorXd>& dir) const {
    const int n = model_->n_modes();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * n);
    if (is_zero()) return out;
    const auto& c = nl_.coefficients;
    if (model_->second_order()) {
      const Eigen::VectorXd u = table_.transpose() * base.head(n);
      Eigen::VectorXd du = table_.transpose() * dir.head(n);
      for (Eigen::Index j = 0; j < u.size(); ++j) du(j) *= detail::poly_derivative(c, u(j));
      out.tail(n).noalias() = -(analysis_ * du);
    } else {
      const Eigen::VectorXd ux = table_.transpose() * base.head(n);
      const Eigen::VectorXd uy = table_.transpose() * base.tail(n);
      Eigen::VectorXd dx = table_.transpose() * dir.head(n);
      Eigen::VectorXd dy = table_.transpose() * dir.tail(n);
      for (Eigen::Index j = 0; j < ux.size(); ++j) {
        const double r = ux(j) * ux(j) + uy(j) * uy(j);
        const double g = detail::poly(c, r);
        const double gp = detail::poly_derivative(c, r);
        const double proj = 2.0 * gp * (ux(j) * dx(j) + uy(j) * dy(j));
        const double re = g * dx(j) + proj * ux(j);
        const double im = g * dy(j) + proj * uy(j);
        dx(j) = re;
        dy(j) = im;
      }
      out.head(n).noalias() = analysis_ * dy;
      out.tail(n).noalias() = -(analysis_ * dx);
    }
    return out;
  }

  /// Dense 2N x 2N matrix of DF(base) in raw coordinates.
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& base) const {
    const int n = model_->n_modes();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    if (is_zero()) return J;
    const auto& c = nl_.coefficients;
    const Eigen::Index g_size = grid_.size();
    if (model_->second_order()) {
      const Eigen::VectorXd u = table_.transpose() * base.head(n);
      Eigen::VectorXd fp(g_size);
      for (Eigen::Index j = 0; j < g_size; ++j) fp(j) = detail::poly_derivative(c, u(j));
      J.bottomLeftCorner(n, n).noalias() = -(analysis_ * fp.asDiagonal() * table_.transpose());
    } else {
      const Eigen::VectorXd ux = table_.transpose() * base.head(n);
      const Eigen::VectorXd uy = table_.transpose() * base.tail(n);
      Eigen::VectorXd dxx(g_size), dxy(g_size), dyy(g_size);
      for (Eigen::Index j = 0; j < g_size; ++j) {
        const double r = ux(j) * ux(j) + uy(j) * uy(j);
        const double g = detail::poly(c, r);
        const double gp = detail::poly_derivative(c, r);
        dxx(j) = g + 2.0 * gp * ux(j) * ux(j);
        dyy(j) = g + 2.0 * gp * uy(j) * uy(j);
        dxy(j) = 2.0 * gp * ux(j) * uy(j);
      }
      const Eigen::MatrixXd Mxx = analysis_ * dxx.asDiagonal() * table_.transpose();
      const Eigen::MatrixXd Myy = analysis_ * dyy.asDiagonal() * table_.transpose();
      const Eigen::MatrixXd Mxy = analysis_ * dxy.asDiagonal() * table_.transpose();
      // Re(Df) = Mxx dx + Mxy dy, Im(Df) = Mxy dx + Myy dy; F' = -i P Df.
      J.topLeftCorner(n, n) = Mxy;
      J.topRightCorner(n, n) = Myy;
      J.bottomLeftCorner(n, n) = -Mxx;
      J.bottomRightCorner(n, n) = -Mxy;
    }
    return J;
  }

  /// Block of DF(base) mapping the coordinates of modes S to the coordinates
  /// of modes S, in the raw order [first_S ; second_S] on both sides.
  Eigen::MatrixXd jacobian_block(const Eigen::Ref<const Eigen::VectorXd>& base,
                                 const ModeSet& S) const {
    const int n = model_->n_modes();
    const int d = static_cast<int>(S.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    if (is_zero() || d == 0) return J;
    const auto& c = nl_.coefficients;
    const Eigen::Index g_size = grid_.size();
    Eigen::MatrixXd synth(g_size, d);  // e_k(x_g) for k in S
    Eigen::MatrixXd anal(d, g_size);
    for (int i = 0; i < d; ++i) {
      synth.col(i) = table_.row(S[i]).transpose();
      anal.row(i) = analysis_.row(S[i]);
    }
    if (model_->second_order()) {
      const Eigen::VectorXd u = table_.transpose() * base.head(n);
      Eigen::VectorXd fp(g_size);
      for (Eigen::Index j = 0; j < g_size; ++j) fp(j) = detail::poly_derivative(c, u(j));
      J.bottomLeftCorner(d, d).noalias() = -(anal * fp.asDiagonal() * synth);
    } else {
      const Eigen::VectorXd ux = table_.transpose() * base.head(n);
      const Eigen::VectorXd uy = table_.transpose() * base.tail(n);
      Eigen::VectorXd dxx(g_size), dxy(g_size), dyy(g_size);
      for (Eigen::Index j = 0; j < g_size; ++j) {
        const double r = ux(j) * ux(j) + uy(j) * uy(j);
        const double g = detail::poly(c, r);
        const double gp = detail::poly_derivative(c, r);
        dxx(j) = g + 2.0 * gp * ux(j) * ux(j);
        dyy(j) = g + 2.0 * gp * uy(j) * uy(j);
        dxy(j) = 2.0 * gp * ux(j) * uy(j);
      }
      const Eigen::MatrixXd Mxy = anal * dxy.asDiagonal() * synth;
      J.topLeftCorner(d, d) = Mxy;
      J.topRightCorner(d, d) = anal * dyy.asDiagonal() * synth;
      J.bottomLeftCorner(d, d) = -(anal * dxx.asDiagonal() * synth);
      J.bottomRightCorner(d, d) = -Mxy;
    }
    return J;
  }

  /// Potential part of the conserved energy: int V(u) with V' = f, V(0) = 0
  /// (wave, plate), and (1/2) int P(|u|^2) with P(0) = 0 (nls).
  double potential(const Eigen::Ref<const Eigen::VectorXd>& coords) const {
    if (is_zero()) return 0.0;
    const int n = model_->n_modes();
    const auto& c = nl_.coefficients;
    double acc = 0.0;
    if (model_->second_order()) {
      const Eigen::VectorXd u = table_.transpose() * coords.head(n);
      for (Eigen::Index j = 0; j < u.size(); ++j)
        acc += grid_.weights(j) * detail::poly_integral(c, u(j));
    } else {
      const Eigen::VectorXd ux = table_.transpose() * coords.head(n);
      const Eigen::VectorXd uy = table_.transpose() * coords.tail(n);
      for (Eigen::Index j = 0; j < ux.size(); ++j)
        acc += 0.5 * grid_.weights(j) *
               detail::poly_integral(c, ux(j) * ux(j) + uy(j) * uy(j));
    }
    return acc;
  }

  /// Taylor coefficients U_0..U_K of the solution through `coords`:
  /// U(t0 + h) = sum_j U_j h^j, U_{j+1} = (A U_j + [F(U)]_j) / (j + 1), with
  /// [F(U)]_j expanded by Cauchy products of grid values. The derivatives are
  /// D_j = j! U_j; keeping U_j avoids factorial overflow.
  std::vector<Eigen::VectorXd> taylor_coefficients(const Eigen::Ref<const Eigen::VectorXd>& coords,
                                                   int K) const {
    detail::require(K >= 0, "time_derivatives: K must be >= 0");
    const int n = model_->n_modes();
    const Eigen::VectorXd& mu = model_->mode_frequencies();
    const auto& c = nl_.coefficients;
    const bool active = !is_zero();
    std::vector<Eigen::VectorXd> U;
    U.reserve(K + 1);
    U.emplace_back(coords);

    if (model_->second_order()) {
      const int deg = nl_.degree(model_->variant());
      // pw[p][j]: j-th Taylor coefficient of u^p on the grid, p = 1..deg.
      std::vector<std::vector<Eigen::ArrayXd>> pw(deg + 1);
      for (int j = 0; j < K; ++j) {
        Eigen::VectorXd next(2 * n);
        next.head(n) = U[j].tail(n);
        next.tail(n) = -(mu.array().square() * U[j].head(n).array()).matrix();
        if (active) {
          pw[1].push_back((table_.transpose() * U[j].head(n)).array());
          for (int p = 2; p <= deg; ++p) {
            Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(grid_.size());
            for (int i = 0; i <= j; ++i) acc += pw[1][i] * pw[p - 1][j - i];
            pw[p].push_back(std::move(acc));
          }
          Eigen::ArrayXd fj = Eigen::ArrayXd::Zero(grid_.size());
          for (int p = 1; p <= deg; ++p)
            if (c[p] != 0.0) fj += c[p] * pw[p][j];
          next.tail(n).noalias() -= analysis_ * fj.matrix();
        }
        U.push_back(next / (j + 1));
      }
    } else {
      const int top = static_cast<int>(c.size()) - 1;
      std::vector<Eigen::ArrayXcd> uj;      // Taylor coefficients of u
      std::vector<Eigen::ArrayXd> rj;       // of r = |u|^2
      std::vector<std::vector<Eigen::ArrayXd>> pr(std::max(top, 0) + 1);  // of r^m
      std::vector<Eigen::ArrayXd> gj;       // of g = P'(r)
      const Eigen::Index gs = grid_.size();
      for (int j = 0; j < K; ++j) {
        Eigen::VectorXd next(2 * n);
        next.head(n) = (mu.array() * U[j].tail(n).array()).matrix();
        next.tail(n) = -(mu.array() * U[j].head(n).array()).matrix();
        if (active) {
          Eigen::ArrayXcd u(gs);
          u.real() = (table_.transpose() * U[j].head(n)).array();
          u.imag() = (table_.transpose() * U[j].tail(n)).array();
          uj.push_back(std::move(u));
          Eigen::ArrayXd r = Eigen::ArrayXd::Zero(gs);
          for (int i = 0; i <= j; ++i) r += (uj[i] * uj[j - i].conjugate()).real();
          rj.push_back(std::move(r));
          if (top >= 1) {
            pr[1].push_back(rj[j]);
            for (int m = 2; m <= top; ++m) {
              Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(gs);
              for (int i = 0; i <= j; ++i) acc += rj[i] * pr[m - 1][j - i];
              pr[m].push_back(std::move(acc));
            }
          }
          Eigen::ArrayXd g = Eigen::ArrayXd::Zero(gs);
          if (j == 0 && !c.empty()) g += c[0];
          for (int m = 1; m <= top; ++m)
            if (c[m] != 0.0) g += c[m] * pr[m][j];
          gj.push_back(std::move(g));
          Eigen::ArrayXcd f = Eigen::ArrayXcd::Zero(gs);
          for (int i = 0; i <= j; ++i) f += gj[i] * uj[j - i];
          // F = -i P f  ->  (Im Pf, -Re Pf)
          next.head(n).noalias() += analysis_ * f.imag().matrix();
          next.tail(n).noalias() -= analysis_ * f.real().matrix();
        }
        U.push_back(next / (j + 1));
      }
    }
    return U;
  }

 private:
  ModelPtr model_;
  Nonlinearity nl_;
  QuadratureRule grid_;
  Eigen::MatrixXd table_;     // N x G'
  Eigen::MatrixXd analysis_;  // N x G', table * diag(weights)
};

/// A U in raw coordinates.
inline Eigen::VectorXd apply_generator(const ModelOperator& m,
                                       const Eigen::Ref<const Eigen::VectorXd>& coords) {
  const int n = m.n_modes();
  const Eigen::ArrayXd mu = m.mode_frequencies().array();
  Eigen::VectorXd out(2 * n);
  if (m.second_order()) {
    out.head(n) = coords.tail(n);
    out.tail(n) = -(mu.square() * coords.head(n).array()).matrix();
  } else {
    out.head(n) = (mu * coords.tail(n).array()).matrix();
    out.tail(n) = -(mu * coords.head(n).array()).matrix();
  }
  return out;
}

inline State apply_F(const ModelPtr& model, const Nonlinearity& nl, const State& s) {
  s.check_same(State(model));
  return State(model, NonlinearOperator(model, nl).apply(s.coords()));
}

inline State apply_DF(const ModelPtr& model, const Nonlinearity& nl, const State& base,
                      const State& dir) {
  base.check_same(State(model));
  dir.check_same(State(model));
  return State(model, NonlinearOperator(model, nl).derivative(base.coords(), dir.coords()));
}

/// D_0 = s, D_{j+1} = A D_j + (d/dt)^j F(U)|_{U=s}; K <= 40.
inline std::vector<State> time_derivatives(const ModelPtr& model, const Nonlinearity& nl,
                                           const State& s, int K) {
  detail::require(K >= 0 && K <= 40, "time_derivatives: K must lie in [0, 40]");
  s.check_same(State(model));
  const auto U = NonlinearOperator(model, nl).taylor_coefficients(s.coords(), K);
  std::vector<State> D;
  D.reserve(U.size());
  double fact = 1.0;
  for (int j = 0; j <= K; ++j) {
    if (j > 0) fact *= j;
    D.emplace_back(model, U[j] * fact);
  }
  return D;
}

}  // namespace modalrecon
