#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "modalrecon/error.hpp"
#include "modalrecon/spectral.hpp"

namespace modalrecon {

/// Uniform time grid t_m = t0 + m dt, m = 0..steps.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  int steps = 0;

  int size() const { return steps + 1; }
  double time(int m) const { return t0 + m * dt; }
  double span() const { return steps * dt; }
  double end() const { return time(steps); }

  bool matches(const TimeGrid& o) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(dt) * steps);
    return steps == o.steps && std::abs(dt - o.dt) <= 1e-14 * std::max(1.0, dt) &&
           std::abs(t0 - o.t0) <= tol;
  }
};

/// Grid covering [t0, t0 + T] with step dt. dt must divide T to 1e-12.
inline TimeGrid make_time_grid(double T, double dt, double t0 = 0.0) {
  detail::require(std::isfinite(T) && T >= 0.0, "time grid: T must be >= 0");
  detail::require(std::isfinite(dt) && dt > 0.0, "time grid: dt must be > 0");
  const double ratio = T / dt;
  const double steps = std::round(ratio);
  detail::require(std::abs(steps * dt - T) <= 1e-12 * std::max(1.0, T),
                  "time grid: dt does not divide T");
  return TimeGrid{t0, dt, static_cast<int>(steps)};
}

/// States at the nodes of a uniform time grid, stored column-wise.
class Trajectory {
 public:
  Trajectory(ModelPtr model, TimeGrid grid, std::string tag = "")
      : model_(std::move(model)),
        grid_(grid),
        coords_(Eigen::MatrixXd::Zero(model_->dim(), grid.size())),
        tag_(std::move(tag)) {}
  Trajectory(ModelPtr model, TimeGrid grid, Eigen::MatrixXd coords, std::string tag = "")
      : model_(std::move(model)), grid_(grid), coords_(std::move(coords)), tag_(std::move(tag)) {
    detail::require(coords_.rows() == model_->dim() && coords_.cols() == grid_.size(),
                    "Trajectory: coordinate matrix has wrong shape");
  }

  const ModelPtr& model() const { return model_; }
  const TimeGrid& grid() const { return grid_; }
  int size() const { return grid_.size(); }
  double step_size() const { return grid_.dt; }
  const std::string& integrator_tag() const { return tag_; }
  void set_integrator_tag(std::string tag) { tag_ = std::move(tag); }

  const Eigen::MatrixXd& coords() const { return coords_; }
  Eigen::MatrixXd& coords() { return coords_; }
  auto column(int m) const { return coords_.col(m); }
  auto column(int m) { return coords_.col(m); }

  State state(int m) const { return State(model_, coords_.col(m)); }
  void set_state(int m, const State& s) {
    s.check_same(State(model_));
    coords_.col(m) = s.coords();
  }

  /// Every `stride`-th node; stride must divide the step count.
  Trajectory subsample(int stride) const {
    detail::require(stride >= 1 && grid_.steps % stride == 0,
                    "Trajectory::subsample: stride must divide the step count");
    TimeGrid g{grid_.t0, grid_.dt * stride, grid_.steps / stride};
    Eigen::MatrixXd c(coords_.rows(), g.size());
    for (int m = 0; m < g.size(); ++m) c.col(m) = coords_.col(m * stride);
    return Trajectory(model_, g, std::move(c), tag_);
  }

  /// Nodes m0..m1 inclusive, re-based at time(m0).
  Trajectory segment(int m0, int m1) const {
    detail::require(0 <= m0 && m0 <= m1 && m1 <= grid_.steps,
                    "Trajectory::segment: bad node range");
    TimeGrid g{grid_.time(m0), grid_.dt, m1 - m0};
    return Trajectory(model_, g, coords_.middleCols(m0, m1 - m0 + 1), tag_);
  }

 private:
  ModelPtr model_;
  TimeGrid grid_;
  Eigen::MatrixXd coords_;
  std::string tag_;
};

/// sup over nodes of the X^sigma norm.
inline double sup_norm(const Trajectory& tr, const SobolevScale& scale) {
  double best = 0.0;
  for (int m = 0; m < tr.size(); ++m) best = std::max(best, scale.norm(tr.column(m)));
  return best;
}

inline double sup_distance(const Trajectory& a, const Trajectory& b,
                           const SobolevScale& scale) {
  detail::require(a.grid().matches(b.grid()) && a.model() == b.model(),
                  "sup_distance: trajectories on different grids or models");
  double best = 0.0;
  for (int m = 0; m < a.size(); ++m)
    best = std::max(best, scale.norm(a.column(m) - b.column(m)));
  return best;
}

}  // namespace modalrecon
