#pragma once

// Model operators in their eigenbasis, the Sobolev scale X^sigma, modal
// states and the spectral projectors P_n / Q_n.
//
// Coordinates. A State holds 2N reals laid out as [first | second]:
//   wave, plate : first = coefficients a_k of u, second = coefficients b_k
//                 of du/dt, on the L2-orthonormal eigenfunctions e_k;
//   nls         : first = Re c_k, second = Im c_k of the complex field.
// The "normalized" complex coordinate of mode k is
//   zeta_k = s_k * first_k + i * second_k,  s_k = mu_k (wave, plate), 1 (nls),
// in which the energy norm is |zeta|^2 and e^{tA} multiplies zeta_k by
// exp(-i mu_k t). Every propagator in the library works in these coordinates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/quadrature.hpp"

namespace modalrecon {

enum class Variant { wave, plate, nls };
enum class Boundary { dirichlet_interval, periodic_circle };

struct ModelKind {
  Variant variant = Variant::wave;
  Boundary boundary = Boundary::dirichlet_interval;

  friend bool operator==(const ModelKind&, const ModelKind&) = default;
};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::wave: return "wave";
    case Variant::plate: return "plate";
    case Variant::nls: return "nls";
  }
  return "?";
}

inline std::string_view to_string(Boundary b) {
  return b == Boundary::dirichlet_interval ? "dirichlet_interval"
                                           : "periodic_circle";
}

/// Ordered set of mode indices (0-based positions in the model's basis).
using ModeSet = std::vector<int>;

class ModelOperator;
using ModelPtr = std::shared_ptr<const ModelOperator>;

ModelPtr build_model(ModelKind kind, double length, double beta, int n_modes,
                     int grid_size);

/// Diagonalized skew-adjoint generator A of one model. Immutable.
class ModelOperator {
 public:
  const ModelKind& kind() const { return kind_; }
  Variant variant() const { return kind_.variant; }
  Boundary boundary() const { return kind_.boundary; }
  bool second_order() const { return kind_.variant != Variant::nls; }

  double length() const { return length_; }
  double beta() const { return beta_; }
  int n_modes() const { return static_cast<int>(eigenvalues_.size()); }
  int dim() const { return 2 * n_modes(); }
  int grid_size() const { return static_cast<int>(grid_.size()); }

  /// lambda_k of the scalar elliptic operator (-Laplacian).
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  /// mu_k: temporal frequency of mode k under A.
  const Eigen::VectorXd& mode_frequencies() const { return frequencies_; }
  /// s_k of the normalized coordinate zeta_k = s_k first_k + i second_k.
  const Eigen::VectorXd& normalization() const { return normalization_; }

  const QuadratureRule& quadrature_grid() const { return grid_; }
  /// N x G table of e_k at the quadrature nodes.
  const Eigen::MatrixXd& eigenfunction_table() const { return table_; }

  /// Spatial wavenumber of mode k (the j in sin(j pi x / L) or cos(2 pi j x / L)).
  int wavenumber(int k) const {
    if (kind_.boundary == Boundary::dirichlet_interval) return k + 1;
    return (k + 1) / 2;
  }

  double basis_value(int k, double x) const {
    const double L = length_;
    if (kind_.boundary == Boundary::dirichlet_interval) {
      return std::sqrt(2.0 / L) * std::sin((k + 1) * std::numbers::pi * x / L);
    }
    if (k == 0) return 1.0 / std::sqrt(L);
    const int j = (k + 1) / 2;
    const double arg = 2.0 * std::numbers::pi * j * x / L;
    return std::sqrt(2.0 / L) * ((k % 2 == 1) ? std::cos(arg) : std::sin(arg));
  }

  /// N x x.size() matrix of basis values at arbitrary points.
  Eigen::MatrixXd evaluate_basis(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd out(n_modes(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j)
      for (int k = 0; k < n_modes(); ++k) out(k, j) = basis_value(k, x(j));
    return out;
  }

  /// Quadrature rule of `size` nodes of the model's family (Gauss-Legendre
  /// on the interval, uniform on the circle).
  QuadratureRule make_grid(int size) const {
    if (kind_.boundary == Boundary::dirichlet_interval)
      return gauss_legendre(size, 0.0, length_);
    QuadratureRule q{Eigen::VectorXd(size), Eigen::VectorXd(size)};
    for (int j = 0; j < size; ++j) {
      q.nodes(j) = length_ * j / size;
      q.weights(j) = length_ / size;
    }
    return q;
  }

 private:
  friend ModelPtr build_model(ModelKind, double, double, int, int);
  ModelOperator() = default;

  ModelKind kind_;
  double length_ = 0.0;
  double beta_ = 0.0;
  Eigen::VectorXd eigenvalues_;
  Eigen::VectorXd frequencies_;
  Eigen::VectorXd normalization_;
  QuadratureRule grid_;
  Eigen::MatrixXd table_;
};

inline ModelPtr build_model(ModelKind kind, double length, double beta,
                            int n_modes, int grid_size) {
  using detail::require;
  require(std::isfinite(length) && length > 0.0, "build_model: length must be > 0");
  require(std::isfinite(beta) && beta >= 0.0, "build_model: beta must be >= 0");
  require(n_modes >= 1, "build_model: n_modes must be >= 1");
  require(grid_size >= 4 * n_modes,
          "build_model: grid_size must be >= 4 * n_modes to resolve mode N");
  if (kind.boundary == Boundary::periodic_circle && kind.variant != Variant::nls) {
    require(beta > 0.0,
            "build_model: beta must be > 0 for wave/plate on the circle "
            "(the constant mode would have zero frequency)");
  }

  std::shared_ptr<ModelOperator> m(new ModelOperator());
  m->kind_ = kind;
  m->length_ = length;
  m->beta_ = beta;
  m->eigenvalues_.resize(n_modes);
  m->frequencies_.resize(n_modes);
  m->normalization_.resize(n_modes);
  for (int k = 0; k < n_modes; ++k) {
    const double j = m->wavenumber(k);
    const double lam =
        kind.boundary == Boundary::dirichlet_interval
            ? std::pow(j * std::numbers::pi / length, 2)
            : std::pow(2.0 * j * std::numbers::pi / length, 2);
    double mu = 0.0;
    switch (kind.variant) {
      case Variant::wave: mu = std::sqrt(lam + beta); break;
      case Variant::plate: mu = std::sqrt(lam * lam + beta); break;
      case Variant::nls: mu = lam + beta; break;
    }
    m->eigenvalues_(k) = lam;
    m->frequencies_(k) = mu;
    m->normalization_(k) = kind.variant == Variant::nls ? 1.0 : mu;
  }
  m->grid_ = m->make_grid(grid_size);
  m->table_ = m->evaluate_basis(m->grid_.nodes);
  return m;
}

/// Modal coefficient vector of one point in X^sigma. Value type.
class State {
 public:
  explicit State(ModelPtr model)
      : model_(std::move(model)), coords_(Eigen::VectorXd::Zero(model_->dim())) {}
  State(ModelPtr model, Eigen::VectorXd coords)
      : model_(std::move(model)), coords_(std::move(coords)) {
    detail::require(coords_.size() == model_->dim(),
                    "State: coordinate vector has wrong size");
  }

  const ModelPtr& model() const { return model_; }
  const Eigen::VectorXd& coords() const { return coords_; }
  Eigen::VectorXd& coords() { return coords_; }
  int n_modes() const { return model_->n_modes(); }

  auto first() const { return coords_.head(n_modes()); }
  auto first() { return coords_.head(n_modes()); }
  auto second() const { return coords_.tail(n_modes()); }
  auto second() { return coords_.tail(n_modes()); }

  /// Complex field coefficients (nls layout).
  Eigen::VectorXcd field() const {
    Eigen::VectorXcd c(n_modes());
    for (int k = 0; k < n_modes(); ++k) c(k) = {coords_(k), coords_(n_modes() + k)};
    return c;
  }
  static State from_field(ModelPtr model, const Eigen::VectorXcd& c) {
    State s(std::move(model));
    s.first() = c.real();
    s.second() = c.imag();
    return s;
  }

  State& operator+=(const State& o) {
    check_same(o);
    coords_ += o.coords_;
    return *this;
  }
  State& operator-=(const State& o) {
    check_same(o);
    coords_ -= o.coords_;
    return *this;
  }
  State& operator*=(double a) {
    coords_ *= a;
    return *this;
  }
  friend State operator+(State a, const State& b) { return a += b; }
  friend State operator-(State a, const State& b) { return a -= b; }
  friend State operator*(double s, State a) { return a *= s; }

  void check_same(const State& o) const {
    if (o.model_ != model_) throw ValidationError("State: mismatched model");
  }

 private:
  ModelPtr model_;
  Eigen::VectorXd coords_;
};

inline Eigen::VectorXcd to_normalized(const ModelOperator& m,
                                      const Eigen::Ref<const Eigen::VectorXd>& coords) {
  const int n = m.n_modes();
  Eigen::VectorXcd z(n);
  for (int k = 0; k < n; ++k)
    z(k) = {m.normalization()(k) * coords(k), coords(n + k)};
  return z;
}

inline Eigen::VectorXd from_normalized(const ModelOperator& m,
                                       const Eigen::Ref<const Eigen::VectorXcd>& z) {
  const int n = m.n_modes();
  Eigen::VectorXd c(2 * n);
  for (int k = 0; k < n; ++k) {
    c(k) = z(k).real() / m.normalization()(k);
    c(n + k) = z(k).imag();
  }
  return c;
}

/// X^sigma = D((A*A)^{sigma/2}) on the truncated space. The weight of mode k
/// is (1 + mu_k^2)^sigma on |zeta_k|^2, so sigma = 0 is the energy norm
/// (H1 x L2 for wave, H2 x L2 for plate, L2 for nls).
class SobolevScale {
 public:
  SobolevScale(ModelPtr model, double sigma) : model_(std::move(model)), sigma_(sigma) {
    detail::require(std::isfinite(sigma) && sigma >= 0.0,
                    "SobolevScale: sigma must be >= 0");
    const int n = model_->n_modes();
    mode_weights_.resize(n);
    weights_.resize(2 * n);
    for (int k = 0; k < n; ++k) {
      const double mu = model_->mode_frequencies()(k);
      const double s = model_->normalization()(k);
      mode_weights_(k) = std::pow(1.0 + mu * mu, sigma);
      weights_(k) = s * s * mode_weights_(k);
      weights_(n + k) = mode_weights_(k);
    }
  }

  const ModelPtr& model() const { return model_; }
  double sigma() const { return sigma_; }
  /// Per raw coordinate (2N entries).
  const Eigen::VectorXd& weights() const { return weights_; }
  /// Per mode, acting on |zeta_k|^2 (N entries).
  const Eigen::VectorXd& mode_weights() const { return mode_weights_; }

  double norm_squared(const Eigen::Ref<const Eigen::VectorXd>& coords) const {
    return (weights_.array() * coords.array().square()).sum();
  }
  double norm(const Eigen::Ref<const Eigen::VectorXd>& coords) const {
    return std::sqrt(norm_squared(coords));
  }

 private:
  ModelPtr model_;
  double sigma_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd mode_weights_;
};

inline double norm_sigma(const State& s, const SobolevScale& scale) {
  if (s.model() != scale.model())
    throw ValidationError("norm_sigma: state and scale built over different models");
  return scale.norm(s.coords());
}

/// Modes with mu_k <= n.
inline ModeSet low_modes(const ModelOperator& m, double n) {
  ModeSet out;
  for (int k = 0; k < m.n_modes(); ++k)
    if (m.mode_frequencies()(k) <= n) out.push_back(k);
  return out;
}

/// Modes with mu_k > n.
inline ModeSet high_modes(const ModelOperator& m, double n) {
  ModeSet out;
  for (int k = 0; k < m.n_modes(); ++k)
    if (m.mode_frequencies()(k) > n) out.push_back(k);
  return out;
}

inline ModeSet all_modes(const ModelOperator& m) { return high_modes(m, -1.0); }

namespace detail {

/// Zero every coordinate of modes whose membership disagrees with `keep_low`.
inline void mask_modes(const ModelOperator& m, Eigen::Ref<Eigen::VectorXd> coords,
                       double n, bool keep_low) {
  const int nm = m.n_modes();
  for (int k = 0; k < nm; ++k) {
    const bool low = m.mode_frequencies()(k) <= n;
    if (low != keep_low) {
      coords(k) = 0.0;
      coords(nm + k) = 0.0;
    }
  }
}

inline void mask_to_set(const ModelOperator& m, Eigen::Ref<Eigen::VectorXd> coords,
                        const ModeSet& keep) {
  const int nm = m.n_modes();
  std::vector<char> in(nm, 0);
  for (int k : keep) in[k] = 1;
  for (int k = 0; k < nm; ++k) {
    if (!in[k]) {
      coords(k) = 0.0;
      coords(nm + k) = 0.0;
    }
  }
}

inline void check_mode_set(const ModelOperator& m, const ModeSet& set,
                           const std::string& who) {
  require(!set.empty(), who + ": mode set is empty");
  for (int k : set)
    require(k >= 0 && k < m.n_modes(), who + ": mode index out of range");
  require(std::is_sorted(set.begin(), set.end()) &&
              std::adjacent_find(set.begin(), set.end()) == set.end(),
          who + ": mode set must be sorted and unique");
}

}  // namespace detail

/// P_n = 1_{[0,n]}((AA*)^{1/2}): keeps modes with mu_k <= n.
inline State project_low(const State& s, double n) {
  detail::require(n >= 0.0, "project_low: n must be >= 0");
  State out = s;
  detail::mask_modes(*s.model(), out.coords(), n, true);
  return out;
}

/// Q_n = I - P_n.
inline State project_high(const State& s, double n) {
  detail::require(n >= 0.0, "project_high: n must be >= 0");
  State out = s;
  detail::mask_modes(*s.model(), out.coords(), n, false);
  return out;
}

}  // namespace modalrecon
