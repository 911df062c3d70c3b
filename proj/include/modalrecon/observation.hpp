#pragma once

// Observation operators C, the cutoff profile b_omega, observation records
// and the 1D geometric control time.
//
// In the normalized packed layout [Re zeta ; Im zeta] the observation is
//   wave, plate : C = [[0, 0], [0, B]]   (cutoff velocity)
//   nls         : C = [[B, 0], [0, B]]   (cutoff field)
// with B_jk = int b e_j e_k. The observed value is itself a State, measured
// in the same X^sigma norm as the solution.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "modalrecon/error.hpp"
#include "modalrecon/quadrature.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

struct Interval {
  double a = 0.0;
  double b = 0.0;
  double length() const { return b - a; }
};

/// b(x) = max over intervals of a plateau-ramp bump: 1 on [a, b], falling to
/// 0 over `smoothing` on each side through the C^2 ramp 6t^5 - 15t^4 + 10t^3.
/// Ramps are clipped at the ends of an interval domain and wrap on the circle.
class CutoffProfile {
 public:
  CutoffProfile(double length, Boundary boundary, std::vector<Interval> intervals,
                double smoothing)
      : length_(length), boundary_(boundary), intervals_(std::move(intervals)),
        smoothing_(smoothing) {
    using detail::require;
    require(length > 0.0, "cutoff: domain length must be > 0");
    require(std::isfinite(smoothing) && smoothing >= 0.0, "cutoff: smoothing must be >= 0");
    std::sort(intervals_.begin(), intervals_.end(),
              [](const Interval& x, const Interval& y) { return x.a < y.a; });
    for (const auto& iv : intervals_) {
      require(std::isfinite(iv.a) && std::isfinite(iv.b) && iv.a < iv.b,
              "cutoff: interval endpoints must satisfy a < b");
      require(iv.a >= 0.0 && iv.b <= length, "cutoff: interval outside the domain (0, L)");
    }
    for (std::size_t i = 1; i < intervals_.size(); ++i)
      require(intervals_[i - 1].b <= intervals_[i].a, "cutoff: intervals overlap");
  }

  double length() const { return length_; }
  Boundary boundary() const { return boundary_; }
  const std::vector<Interval>& intervals() const { return intervals_; }
  double smoothing() const { return smoothing_; }
  bool empty() const { return intervals_.empty(); }
  bool sharp() const { return smoothing_ == 0.0; }

  double operator()(double x) const {
    double best = 0.0;
    for (const auto& iv : intervals_) {
      best = std::max(best, bump(iv, x));
      if (boundary_ == Boundary::periodic_circle) {
        best = std::max(best, bump(iv, x - length_));
        best = std::max(best, bump(iv, x + length_));
      }
      if (best >= 1.0) break;
    }
    return best;
  }

  Eigen::VectorXd sample(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = (*this)(x(i));
    return out;
  }

  /// Points in [0, L] where the profile is not smooth, including 0 and L.
  std::vector<double> breakpoints() const {
    std::vector<double> pts{0.0, length_};
    auto add = [&](double p) {
      if (boundary_ == Boundary::periodic_circle) p = p - length_ * std::floor(p / length_);
      if (p >= 0.0 && p <= length_) pts.push_back(p);
    };
    for (const auto& iv : intervals_) {
      add(iv.a);
      add(iv.b);
      if (smoothing_ > 0.0) {
        add(iv.a - smoothing_);
        add(iv.b + smoothing_);
      }
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
  }

 private:
  double length_;
  Boundary boundary_;
  std::vector<Interval> intervals_;
  double smoothing_;

  static double ramp(double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); }

  double bump(const Interval& iv, double x) const {
    if (x >= iv.a && x <= iv.b) return 1.0;
    if (smoothing_ <= 0.0) return 0.0;
    const double dist = x < iv.a ? iv.a - x : x - iv.b;
    if (dist >= smoothing_) return 0.0;
    return ramp(1.0 - dist / smoothing_);
  }
};

/// B_jk = int chi e_j e_k by composite Gauss-Legendre split at the
/// breakpoints of chi; exact for the sharp indicator up to rounding.
inline Eigen::MatrixXd cutoff_modal_matrix(const ModelOperator& m, const CutoffProfile& chi) {
  const int n = m.n_modes();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  if (chi.empty()) return B;
  const std::vector<double> pts = chi.breakpoints();
  const double h = m.length() / (2.0 * n + 2.0);
  for (std::size_t p = 1; p < pts.size(); ++p) {
    const double lo = pts[p - 1], hi = pts[p];
    if (hi - lo <= 0.0) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / h)));
    const QuadratureRule q = composite_gauss_legendre(lo, hi, panels, 12);
    const Eigen::VectorXd b = chi.sample(q.nodes);
    if (b.maxCoeff() == 0.0) continue;
    const Eigen::MatrixXd E = m.evaluate_basis(q.nodes);  // n x Q
    B.noalias() += E * (q.weights.array() * b.array()).matrix().asDiagonal() * E.transpose();
  }
  return 0.5 * (B + B.transpose());
}

/// C = (spatial cutoff) o (component selector), with its observation window T.
class ObservationOperator {
 public:
  ObservationOperator(ModelPtr model, CutoffProfile profile, double window)
      : model_(std::move(model)), profile_(std::move(profile)), window_(window) {
    detail::require(std::isfinite(window) && window > 0.0,
                    "observation: window T must be > 0");
    detail::require(std::abs(profile_.length() - model_->length()) <= 1e-14 * model_->length() &&
                        profile_.boundary() == model_->boundary(),
                    "observation: cutoff built for a different domain");
    cutoff_values_ = profile_.sample(model_->quadrature_grid().nodes);
    B_ = cutoff_modal_matrix(*model_, profile_);
  }

  const ModelPtr& model() const { return model_; }
  const CutoffProfile& profile() const { return profile_; }
  double window() const { return window_; }
  /// b_omega at the model quadrature nodes.
  const Eigen::VectorXd& cutoff_values() const { return cutoff_values_; }
  const Eigen::MatrixXd& modal_matrix() const { return B_; }
  /// "velocity" for wave/plate, "field" for nls.
  std::string component() const { return model_->second_order() ? "velocity" : "field"; }
  bool smooth() const { return !profile_.sharp(); }

  /// C U in raw coordinates.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& coords) const {
    const int n = model_->n_modes();
    Eigen::VectorXd out(2 * n);
    if (model_->second_order())
      out.head(n).setZero();
    else
      out.head(n).noalias() = B_ * coords.head(n);
    out.tail(n).noalias() = B_ * coords.tail(n);
    return out;
  }

  /// C in the normalized packed layout over all modes (2N x 2N).
  Eigen::MatrixXd normalized_matrix() const {
    const int n = model_->n_modes();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    if (!model_->second_order()) C.topLeftCorner(n, n) = B_;
    C.bottomRightCorner(n, n) = B_;
    return C;
  }

 private:
  ModelPtr model_;
  CutoffProfile profile_;
  double window_;
  Eigen::VectorXd cutoff_values_;
  Eigen::MatrixXd B_;
};

inline ObservationOperator build_observation(const ModelPtr& model, std::vector<Interval> omega,
                                             double window, double smoothing) {
  return ObservationOperator(
      model, CutoffProfile(model->length(), model->boundary(), std::move(omega), smoothing),
      window);
}

/// Observed values C U(t_m), stored as States on the working time grid.
struct ObservationRecord {
  Trajectory values;
  const TimeGrid& grid() const { return values.grid(); }
};

inline ObservationRecord observe(const ObservationOperator& obs, const Trajectory& u) {
  detail::require(u.model() == obs.model(), "observe: trajectory built over another model");
  Trajectory y(u.model(), u.grid(), "observation");
  for (int m = 0; m < u.size(); ++m) y.column(m) = obs.apply(u.column(m));
  return ObservationRecord{std::move(y)};
}

/// Converts raw sensor samples (b_omega times the observed component at the
/// model quadrature nodes, one column per time node) into a record by L2
/// projection with the model quadrature. For nls pass the real and imaginary
/// parts; `imag` is ignored for wave/plate.
inline ObservationRecord record_from_sensor_samples(const ModelPtr& model, const TimeGrid& grid,
                                                    const Eigen::MatrixXd& real,
                                                    const Eigen::MatrixXd& imag = {}) {
  const int n = model->n_modes();
  const int G = model->grid_size();
  detail::require(real.rows() == G && real.cols() == grid.size(),
                  "record_from_sensor_samples: samples must be grid_size x time nodes");
  const bool nls = !model->second_order();
  if (nls)
    detail::require(imag.rows() == G && imag.cols() == grid.size(),
                    "record_from_sensor_samples: nls needs imaginary samples of the same shape");
  const Eigen::MatrixXd analysis =
      model->eigenfunction_table() * model->quadrature_grid().weights.asDiagonal();
  Trajectory y(model, grid, "observation");
  for (int m = 0; m < grid.size(); ++m) {
    if (nls) {
      y.column(m).head(n) = analysis * real.col(m);
      y.column(m).tail(n) = analysis * imag.col(m);
    } else {
      y.column(m).tail(n) = analysis * real.col(m);
    }
  }
  return ObservationRecord{std::move(y)};
}

/// Infimum of the times T for which every unit-speed ray meets the closure of
/// omega before T. Rays reflect at the ends of an interval and wrap on the
/// circle. A gap of the complement between two pieces of omega costs its
/// length; a gap touching a reflecting end costs twice its length.
inline double gcc_time(double length, Boundary boundary, const std::vector<Interval>& omega) {
  detail::require(!omega.empty(), "gcc_time: omega must be nonempty");
  const CutoffProfile chi(length, boundary, omega, 0.0);  // validates and sorts
  const auto& iv = chi.intervals();
  double worst = 0.0;
  for (std::size_t i = 1; i < iv.size(); ++i) worst = std::max(worst, iv[i].a - iv[i - 1].b);
  const double left = iv.front().a;
  const double right = length - iv.back().b;
  if (boundary == Boundary::dirichlet_interval)
    worst = std::max({worst, 2.0 * left, 2.0 * right});
  else
    worst = std::max(worst, left + right);
  return worst;
}

/// Operator norm of the truncated commutator [(A*A)^s, C] as a map from
/// X^{sigma + 2s} to X^{sigma + eps}.
inline double commutator_diagnostic(const ObservationOperator& obs, double s_exponent,
                                    double sigma, double eps = 0.5) {
  detail::require(s_exponent > 0.0, "commutator_diagnostic: s must be > 0");
  detail::require(sigma >= 0.0 && eps >= 0.0, "commutator_diagnostic: sigma, eps must be >= 0");
  const ModelOperator& m = *obs.model();
  const int n = m.n_modes();
  const Eigen::MatrixXd C = obs.normalized_matrix();
  Eigen::VectorXd lam(2 * n), dom(2 * n), ran(2 * n);
  for (int k = 0; k < n; ++k) {
    const double mu = m.mode_frequencies()(k);
    const double w = 1.0 + mu * mu;
    lam(k) = lam(n + k) = std::pow(mu * mu, s_exponent);
    dom(k) = dom(n + k) = std::pow(w, -(sigma + 2.0 * s_exponent) / 2.0);
    ran(k) = ran(n + k) = std::pow(w, (sigma + eps) / 2.0);
  }
  const Eigen::MatrixXd K = lam.asDiagonal() * C - C * lam.asDiagonal();
  const Eigen::MatrixXd T = ran.asDiagonal() * K * dom.asDiagonal();
  if (T.isZero(0.0)) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.transpose() * T, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace modalrecon
