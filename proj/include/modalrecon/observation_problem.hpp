#pragma once

// The observation problem on a mode subspace S:
//   dW/dt = A W (+ J(t) W) + H,   W supported on S,
//   minimize sum_m w_m ||C W(t_m) - G(t_m)||_sigma^2 over W(0),
// with w_m the fourth-order Gregory weights of the trajectory grid. The
// normal equations give Pi C W = Pi G where Pi is the orthogonal projector,
// in that discrete inner product, onto the range of W(0) -> C W(.).

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/gramian.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/propagation.hpp"
#include "modalrecon/quadrature.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon {

class ObservationProblem {
 public:
  /// Free propagator e^{tA} on S.
  ObservationProblem(const ObservationOperator& obs, const SobolevScale& scale, ModeSet subspace,
                     const TimeGrid& grid, double rank_tolerance = 1e-12, int threads = 1)
      : model_(obs.model()), scale_(scale), S_(std::move(subspace)), grid_(grid) {
    setup(obs);
    report_ = discrete_gramian(obs, scale, S_, grid_, rank_tolerance, threads);
    finish();
  }

  /// Propagator of dW/dt = A W + Q_n DF(V(t)) W on S = {mu > n}, V the background.
  ObservationProblem(const ObservationOperator& obs, const SobolevScale& scale,
                     const NonlinearOperator& F, const Trajectory& background, double n,
                     double rank_tolerance = 1e-12)
      : model_(obs.model()),
        scale_(scale),
        S_(high_modes(*obs.model(), n)),
        grid_(background.grid()) {
    detail::require(background.model() == model_ && F.model() == model_,
                    "ObservationProblem: background built over another model");
    detail::check_mode_set(*model_, S_, "ObservationProblem");
    setup(obs);
    propagator_ = std::make_unique<LinearizedPropagator>(
        *model_, grid_, S_, detail::linearized_blocks(F, background, S_));
    const int d2 = 2 * static_cast<int>(S_.size());
    Phi_ = propagator_->propagate(Eigen::MatrixXd::Identity(d2, d2));
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d2, d2);
    for (int m = 0; m < grid_.size(); ++m) G += w_(m) * Phi_[m].transpose() * Q_ * Phi_[m];
    report_ = detail::finish_report(0.5 * (G + G.transpose()), scale_, S_, rank_tolerance);
    report_.window = grid_.span();
    report_.time_nodes = grid_.size();
    report_.quadrature = "gregory4(" + std::to_string(grid_.size()) + ")+exp-adams-moulton4";
    report_.smooth_cutoff = obs.smooth();
    finish();
  }

  const GramianReport& report() const { return report_; }
  const ModeSet& subspace() const { return S_; }
  const TimeGrid& grid() const { return grid_; }
  bool linearized() const { return static_cast<bool>(propagator_); }

  /// The trajectory W on S minimizing the weighted misfit to the target
  /// observation G. `source` (raw coordinates) is projected onto S first.
  Trajectory solve(const Trajectory* source, const Trajectory& target) const {
    check_grid(target, "target");
    if (source) check_grid(*source, "source");
    const int d2 = 2 * static_cast<int>(S_.size());
    std::vector<Eigen::MatrixXd> particular = particular_solution(source);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d2);
    for (int m = 0; m < grid_.size(); ++m) {
      Eigen::VectorXd r = packed_all(target.column(m));
      if (source) r.noalias() -= Cs_ * particular[m].col(0);
      rhs.noalias() += w_(m) * (basis(m).transpose() * (Cs_.transpose() * (Sw_.cwiseProduct(r))));
    }
    const Eigen::VectorXd z0 = llt_.solve(rhs);
    Trajectory W(model_, grid_, linearized() ? "observation-problem-linearized"
                                             : "observation-problem");
    for (int m = 0; m < grid_.size(); ++m) {
      Eigen::VectorXd z = basis(m) * z0;
      if (source) z += particular[m].col(0);
      detail::unpack_normalized(*model_, z, S_, W.column(m));
    }
    return W;
  }

  /// Pi G: the orthogonal projection of an observation record onto the range
  /// of W(0) -> C W(.), in raw observation coordinates.
  Trajectory project(const Trajectory& G) const {
    check_grid(G, "record");
    const int d2 = 2 * static_cast<int>(S_.size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d2);
    for (int m = 0; m < grid_.size(); ++m)
      rhs.noalias() +=
          w_(m) * (basis(m).transpose() * (Cs_.transpose() * Sw_.cwiseProduct(packed_all(G.column(m)))));
    const Eigen::VectorXd z0 = llt_.solve(rhs);
    Trajectory out(model_, grid_, "projected-observation");
    for (int m = 0; m < grid_.size(); ++m) {
      const Eigen::VectorXd y = Cs_ * (basis(m) * z0);
      detail::unpack_normalized(*model_, y, all_, out.column(m));
    }
    return out;
  }

  /// sqrt(sum_m w_m ||G(t_m)||_sigma^2) for an observation-valued trajectory.
  double time_norm(const Trajectory& G) const {
    check_grid(G, "record");
    double acc = 0.0;
    for (int m = 0; m < grid_.size(); ++m) acc += w_(m) * scale_.norm_squared(G.column(m));
    return std::sqrt(acc);
  }

 private:
  ModelPtr model_;
  SobolevScale scale_;
  ModeSet S_;
  ModeSet all_;
  TimeGrid grid_;
  Eigen::VectorXd w_;
  Eigen::MatrixXd Cs_;   // 2N x 2|S| normalized packed
  Eigen::VectorXd Sw_;   // X^sigma weights of the observation, 2N
  Eigen::MatrixXd Q_;
  Eigen::VectorXd mu_;
  GramianReport report_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::unique_ptr<LinearizedPropagator> propagator_;
  std::vector<Eigen::MatrixXd> Phi_;
  std::unique_ptr<ExponentialWeights> ew_;

  void setup(const ObservationOperator& obs) {
    detail::require(scale_.model() == model_, "ObservationProblem: scale built over another model");
    detail::check_mode_set(*model_, S_, "ObservationProblem");
    detail::require(grid_.steps >= 1, "ObservationProblem: time grid needs at least 2 nodes");
    all_ = all_modes(*model_);
    w_ = uniform_grid_weights(grid_.size(), grid_.dt);
    Cs_ = detail::observed_columns(obs, S_);
    Sw_ = detail::observation_weights(scale_);
    Q_ = Cs_.transpose() * Sw_.asDiagonal() * Cs_;
    mu_ = detail::subspace_frequencies(*model_, S_);
    ew_ = std::make_unique<ExponentialWeights>(mu_, grid_.dt);
  }

  void finish() {
    if (!report_.observable) {
      throw UnobservableError("observation problem: Gramian not invertible at tolerance "
                              "(min_eig = " + std::to_string(report_.min_eig) +
                                  ", max_eig = " + std::to_string(report_.max_eig) + ")",
                              report_.min_eig, report_.max_eig);
    }
    // The Gramian is factored in normalized coordinates.
    const Eigen::VectorXd D = detail::packed_scale(scale_, S_);
    const Eigen::MatrixXd G = D.asDiagonal() * report_.matrix * D.asDiagonal();
    llt_.compute(G);
    if (llt_.info() != Eigen::Success)
      throw UnobservableError("observation problem: Gramian factorization failed",
                              report_.min_eig, report_.max_eig);
  }

  void check_grid(const Trajectory& tr, const char* what) const {
    detail::require(tr.model() == model_, std::string("ObservationProblem: ") + what +
                                              " built over another model");
    detail::require(tr.grid().steps == grid_.steps &&
                        std::abs(tr.grid().dt - grid_.dt) <= 1e-14 * std::max(1.0, grid_.dt),
                    std::string("ObservationProblem: ") + what + " grid mismatch");
  }

  Eigen::VectorXd packed_all(const Eigen::Ref<const Eigen::VectorXd>& coords) const {
    return detail::pack_normalized(*model_, coords, all_);
  }

  /// Homogeneous solution map at node m (2|S| x 2|S|).
  Eigen::MatrixXd basis(int m) const {
    if (propagator_) return Phi_[m];
    const int d = static_cast<int>(S_.size());
    const double t = m * grid_.dt;
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    for (int i = 0; i < d; ++i) {
      const double c = std::cos(mu_(i) * t), s = std::sin(mu_(i) * t);
      R(i, i) = c;
      R(i, d + i) = s;
      R(d + i, i) = -s;
      R(d + i, d + i) = c;
    }
    return R;
  }

  /// Solution with zero initial state and the source restricted to S, one
  /// 2|S| x 1 block per node.
  std::vector<Eigen::MatrixXd> particular_solution(const Trajectory* source) const {
    if (!source) return {};
    const int d = static_cast<int>(S_.size());
    Eigen::MatrixXd h(2 * d, grid_.size());
    for (int m = 0; m < grid_.size(); ++m)
      h.col(m) = detail::pack_normalized(*model_, source->column(m), S_);
    if (propagator_) return propagator_->propagate(Eigen::MatrixXd::Zero(2 * d, 1), &h);
    Eigen::MatrixXcd hc(d, grid_.size());
    hc.real() = h.topRows(d);
    hc.imag() = h.bottomRows(d);
    const Eigen::MatrixXcd Z =
        detail::duhamel_normalized(*ew_, Eigen::VectorXcd::Zero(d), &hc, grid_.steps);
    std::vector<Eigen::MatrixXd> out(grid_.size());
    for (int m = 0; m < grid_.size(); ++m) {
      out[m].resize(2 * d, 1);
      out[m].col(0) << Z.col(m).real(), Z.col(m).imag();
    }
    return out;
  }
};

/// One-shot form: W with modal support in `subspace` solving the
/// observation problem for source H and target G.
inline Trajectory solve_observation_problem(const ObservationOperator& obs,
                                            const SobolevScale& scale, const Trajectory* source,
                                            const ObservationRecord& target,
                                            const ModeSet& subspace) {
  const ObservationProblem problem(obs, scale, subspace, target.grid());
  return problem.solve(source, target.values);
}

}  // namespace modalrecon
