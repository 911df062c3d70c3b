// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "modalrecon/diagnostics.hpp"
#include "modalrecon/gramian.hpp"
#include "modalrecon/integrators.hpp"
#include "modalrecon/io/runner.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/observation_problem.hpp"
#include "modalrecon/propagation.hpp"
#include "modalrecon/reconstruction.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace modalrecon;
using testing_support::dirichlet;
using testing_support::random_state;
using testing_support::scaled;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Nonlinearity cubic(Variant v) {
  return make_nonlinearity(v, v == Variant::nls ? std::vector<double>{0.0, 1.0}
                                                : std::vector<double>{0, 0, 0, 1.0});
}

// 1 ---------------------------------------------------------------------
Outcome spectral_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  double eig = 0.0, gram = 0.0;
  for (double L : {M_PI, 1.0, 2.7}) {
    auto m = dirichlet(Variant::wave, 64, 0.0, L);
    for (int k = 0; k < 64; ++k) {
      const double ex = std::pow((k + 1) * M_PI / L, 2);
      eig = std::max(eig, std::abs(m->eigenvalues()(k) - ex) / ex);
    }
    const auto& q = m->quadrature_grid();
    const Eigen::MatrixXd& E = m->eigenfunction_table();
    const Eigen::MatrixXd G = E * q.weights.asDiagonal() * E.transpose();
    gram = std::max(gram, (G - Eigen::MatrixXd::Identity(64, 64)).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {eig <= 1e-12 && gram <= 1e-10 && secs < 1.0,
          "eigenvalue rel err " + fmt(eig) + ", Gram err " + fmt(gram) + ", " + fmt(secs) + " s"};
}

// 2 ---------------------------------------------------------------------
Outcome conservative_propagation() {
  Rng rng(2);
  double worst = 0.0;
  const Variant variants[] = {Variant::wave, Variant::plate, Variant::nls};
  const double sigmas[] = {0.0, 0.6, 1.0};
  for (int i = 0; i < 100; ++i) {
    auto m = dirichlet(variants[i % 3], 8 + i % 25);
    const SobolevScale sc(m, sigmas[(i / 3) % 3]);
    const State w = random_state(m, rng);
    const double t = rng.uniform(0.0, 10.0);
    const double r = norm_sigma(linear_propagate(m, w, t), sc) / norm_sigma(w, sc);
    worst = std::max(worst, std::abs(r - 1.0));
  }
  return {worst <= 1e-12, "max |ratio - 1| " + fmt(worst) + " over 100 cases"};
}

// 3 ---------------------------------------------------------------------
Outcome gramian_closed_form() {
  auto m = dirichlet(Variant::wave, 6);
  const SobolevScale s0(m, 0.0);
  const auto full = build_observation(m, {{0.0, M_PI}}, 2 * M_PI, 0.0);
  double closed = 0.0, oracle = 0.0;
  for (int k = 0; k < 6; ++k) {
    const GramianReport r = gramian(full, s0, {k});
    closed = std::max(closed, (r.matrix - M_PI * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff());
    const Eigen::Matrix2d G = testing_support::single_mode_gramian(k + 1.0, 2 * M_PI, 10000);
    oracle = std::max(oracle, (r.matrix - G).cwiseAbs().maxCoeff());
  }
  // Observability inequality ||W||^2 <= c_obs^2 int ||C e^{tA} W||^2 on 100
  // random states, the integral by an independent Gauss-Legendre rule.
  auto mw = dirichlet(Variant::wave, 16);
  const SobolevScale sc(mw, 0.6);
  const std::vector<Interval> omega{{0.3 * M_PI, 0.7 * M_PI}};
  const double T = 1.5 * gcc_time(M_PI, Boundary::dirichlet_interval, omega);
  const auto obs = build_observation(mw, omega, T, 0.05 * M_PI);
  const GramianReport r = gramian(obs, sc, all_modes(*mw));
  const auto q = composite_gauss_legendre(0.0, T, 600, 6);
  Rng rng(3);
  int held = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const State w = random_state(mw, rng);
    double integral = 0.0;
    for (Eigen::Index j = 0; j < q.size(); ++j)
      integral += q.weights(j) * sc.norm_squared(obs.apply(propagate_coords(*mw, w.coords(), q.nodes(j))));
    const double lhs = std::pow(norm_sigma(w, sc), 2);
    const double rhs = r.obs_constant * r.obs_constant * integral;
    worst = std::max(worst, lhs / rhs);
    if (lhs <= rhs * (1 + 1e-10)) ++held;
  }
  return {closed <= 1e-8 && oracle <= 1e-8 && held == 100 && r.observable,
          "|G - pi I| " + fmt(closed) + ", |G - oracle| " + fmt(oracle) + ", inequality " +
              std::to_string(held) + "/100 (worst lhs/rhs " + fmt(worst) + ")"};
}

// 4 ---------------------------------------------------------------------
Outcome gcc_times() {
  Rng rng(4);
  double worst = 0.0, closed = 0.0;
  const int cases = 12;
  for (int trial = 0; trial < cases; ++trial) {
    const Boundary b = trial % 2 ? Boundary::periodic_circle : Boundary::dirichlet_interval;
    const double L = b == Boundary::periodic_circle ? 2 * M_PI : M_PI;
    std::vector<Interval> omega;
    if (trial < 4) {
      // One interval: 2 max(a, L - b) on the interval, L - |omega| on the circle.
      const double a = rng.uniform(0.0, 0.6 * L), len = rng.uniform(0.05, 0.35) * L;
      omega.push_back({a, a + len});
      const double formula = b == Boundary::dirichlet_interval ? 2 * std::max(a, L - a - len) : L - len;
      closed = std::max(closed, std::abs(gcc_time(L, b, omega) - formula));
    } else {
      double x = rng.uniform(0.0, 0.3 * L);
      for (int p = 0; p < 1 + trial % 3 && x < L; ++p) {
        const double bnd = std::min(L, x + rng.uniform(0.05, 0.2) * L);
        omega.push_back({x, bnd});
        x = bnd + rng.uniform(0.05, 0.25) * L;
      }
    }
    worst = std::max(worst, std::abs(gcc_time(L, b, omega) - testing_support::ray_oracle(L, b, omega)));
  }
  return {worst <= 1e-6 && closed <= 1e-12,
          "max |gcc - ray oracle| " + fmt(worst) + " over " + std::to_string(cases) +
              " configurations, closed forms " + fmt(closed)};
}

// 5 ---------------------------------------------------------------------
Outcome linear_reconstruction() {
  Rng rng(5);
  double worst = 0.0;
  int used = 0;
  for (int i = 0; i < 12; ++i) {
    const Variant v = i % 3 == 0 ? Variant::wave : i % 3 == 1 ? Variant::plate : Variant::nls;
    auto m = dirichlet(v, 10 + i);
    const SobolevScale sc(m, 0.6 * (i % 2));
    const double a = rng.uniform(0.2, 1.2);
    const std::vector<Interval> om{{a, a + rng.uniform(0.6, 1.5)}};
    const double T = v == Variant::wave ? 1.2 * gcc_time(M_PI, Boundary::dirichlet_interval, om) : 1.0;
    const double dt = v == Variant::plate ? 2e-4 : 1e-3;
    const double Tg = std::round(T / dt) * dt;
    const TimeGrid g = make_time_grid(Tg, dt);
    const auto obs = build_observation(m, om, Tg, 0.1);
    const ModeSet S = all_modes(*m);
    const ObservationProblem P(obs, sc, S, g);
    if (!(P.report().condition <= 1e8)) continue;
    ++used;
    const State w0 = random_state(m, rng);
    Trajectory truth(m, g);
    for (int k = 0; k < g.size(); ++k) truth.column(k) = propagate_coords(*m, w0.coords(), g.time(k));
    const Trajectory W = P.solve(nullptr, observe(obs, truth).values);
    worst = std::max(worst, sc.norm(W.column(0) - w0.coords()) / norm_sigma(w0, sc));
  }
  // Pi-invariance: adding data annihilated by the normal equations changes nothing.
  auto m = dirichlet(Variant::wave, 10);
  const SobolevScale sc(m, 0.6);
  const TimeGrid g = make_time_grid(3.0, 2e-3);
  const auto obs = build_observation(m, {{0.5, 1.6}}, 3.0, 0.2);
  const ObservationProblem P(obs, sc, all_modes(*m), g);
  Trajectory G(m, g), noise(m, g);
  for (int i = 0; i < g.size(); ++i) {
    G.column(i) = obs.apply(random_state(m, rng).coords());
    noise.column(i) = obs.apply(random_state(m, rng).coords());
  }
  Trajectory G2 = G;
  G2.coords() += noise.coords() - P.project(noise).coords();
  const Trajectory a = P.solve(nullptr, G), c = P.solve(nullptr, G2);
  const double inv = sup_distance(a, c, sc) / sup_norm(a, sc);
  return {used >= 6 && worst <= 1e-8 && inv <= 1e-10,
          "max recovery err " + fmt(worst) + " over " + std::to_string(used) +
              " cases with cond <= 1e8, Pi-invariance " + fmt(inv)};
}

// 6, 7 ------------------------------------------------------------------
struct NonlinearRig {
  ModelPtr model;
  SobolevScale scale;
  std::vector<Interval> omega{{0.3 * M_PI, 0.7 * M_PI}};
  double dt, T;
  ObservationOperator obs;
  NonlinearOperator F;
  Trajectory truth;

  NonlinearRig(Variant v, double dt_)
      : model(dirichlet(v, 32)),
        scale(model, 0.6),
        dt(dt_),
        T(std::round(1.5 * gcc_time(M_PI, Boundary::dirichlet_interval, omega) / dt_) * dt_),
        obs(build_observation(model, omega, T, 0.05 * M_PI)),
        F(model, cubic(v)),
        truth(model, make_time_grid(T, dt_)) {
    Rng rng(6);
    const State u0 = scaled(random_state(model, rng), scale, 0.1);
    SolveOptions so;
    so.integrator = Integrator::yoshida4;
    so.record_stride = 4;
    truth = nonlinear_solve(F, u0, T, dt / 4, so);
  }

  double split_top(int k) const {
    const auto& mu = model->mode_frequencies();
    const int N = model->n_modes();
    return 0.5 * (mu(N - k - 1) + mu(N - k));
  }

  ReconstructionResult solve(double n, ReconstructionVariant variant) const {
    Trajectory low = truth;
    for (int m = 0; m < low.size(); ++m) detail::mask_modes(*model, low.column(m), n, true);
    ReconstructionConfig cfg;
    cfg.threshold_n = n;
    cfg.sigma = scale.sigma();
    cfg.fix_tol = 1e-13;
    cfg.variant = variant;
    return reconstruct_high(obs, F, scale, low, observe(obs, truth), cfg);
  }

  double relative_error(const ReconstructionResult& r, double n) const {
    const Trajectory high = detail::high_part_of(truth, n);
    return sup_distance(r.high_trajectory, high, scale) / sup_norm(high, scale);
  }
};

Outcome nonlinear_reconstruction() {
  struct Case {
    const char* name;
    Variant v;
    double dt;
    ReconstructionVariant variant;
  };
  const Case cases[] = {{"wave", Variant::wave, 1e-3, ReconstructionVariant::plain},
                        {"nls linearized", Variant::nls, 1e-4, ReconstructionVariant::linearized},
                        {"plate", Variant::plate, 2e-5, ReconstructionVariant::plain}};
  Outcome out;
  for (const Case& c : cases) {
    const auto t0 = std::chrono::steady_clock::now();
    const NonlinearRig rig(c.v, c.dt);
    const double n = rig.split_top(3);
    const ReconstructionResult r = rig.solve(n, c.variant);
    const double secs = seconds_since(t0);
    double cmax = 0.0;
    for (double x : r.contraction_estimates) cmax = std::max(cmax, x);
    const double err = rig.relative_error(r, n);
    const bool ok = r.converged && cmax < 1.0 && err <= 1e-6 && secs < 300.0;
    out.pass = out.pass && ok;
    out.detail += std::string(out.detail.empty() ? "" : "; ") + c.name + ": " +
                  (r.converged ? "converged" : std::string(to_string(r.status))) + " in " +
                  std::to_string(r.iterations) + ", max contraction " + fmt(cmax) + ", rel err " +
                  fmt(err) + ", " + fmt(secs) + " s";
  }
  return out;
}

Outcome smallness_mechanism() {
  const NonlinearRig rig(Variant::wave, 1e-3);
  std::vector<double> first;
  std::string detail;
  for (int k : {30, 22, 14, 6}) {
    const double n = rig.split_top(k);
    const ReconstructionResult r = rig.solve(n, ReconstructionVariant::plain);
    if (!r.converged || r.contraction_estimates.empty()) continue;
    first.push_back(r.contraction_estimates.front());
    detail += std::string(detail.empty() ? "" : ", ") + "n=" + fmt(n) + ": " + fmt(first.back());
  }
  bool decreasing = first.size() >= 3;
  for (std::size_t i = 1; i < first.size(); ++i) decreasing = decreasing && first[i] < first[i - 1];
  return {decreasing, std::to_string(first.size()) + " converging splits, first contraction " + detail};
}

// 8 ---------------------------------------------------------------------
Outcome analyticity() {
  double pole = 0.0;
  for (double rho : {0.25, 0.5, 1.0}) {
    const AnalyticityReport r = radius_from_norms(testing_support::pole_norms(rho, 24));
    pole = std::max(pole, std::abs(r.radius_estimate - rho) / rho);
  }
  auto m = dirichlet(Variant::wave, 8);
  const NonlinearOperator free_flow(m, make_nonlinearity(Variant::wave, {}));
  State single(m);
  single.coords()(1) = 1.0;
  const AnalyticityReport lin = analyticity_radius(free_flow, single, 0.6, 24);

  auto mc = dirichlet(Variant::wave, 32);
  const NonlinearOperator F(mc, cubic(Variant::wave));
  const State s = testing_support::analytic_state(mc, 1.0, 0.1);
  std::vector<double> radii;
  for (int K : {16, 24, 32}) radii.push_back(analyticity_radius(F, s, 0.6, K).radius_estimate);
  const double ref = radii[1];
  double spread = 0.0;
  for (double r : radii) spread = std::max(spread, std::abs(r - ref) / ref);
  const bool finite = std::isfinite(ref) && ref > 0.0;
  return {pole <= 0.1 && lin.entire && std::isinf(lin.radius_estimate) && finite && spread <= 0.2,
          "pole rel err " + fmt(pole) + ", single mode " + (lin.entire ? "entire" : "finite") +
              ", cubic radii " + fmt(radii[0]) + "/" + fmt(radii[1]) + "/" + fmt(radii[2]) +
              " (spread " + fmt(spread) + ")"};
}

// 9 ---------------------------------------------------------------------
Outcome integrator_quality() {
  // Strang order on the cubic wave against a Yoshida reference at dt = 1e-4.
  auto m = dirichlet(Variant::wave, 8);
  const SobolevScale s0(m, 0.0);
  Rng rng(9);
  const State u = scaled(random_state(m, rng), s0, 1.0);
  const NonlinearOperator F(m, cubic(Variant::wave));
  SolveOptions fine;
  fine.integrator = Integrator::yoshida4;
  const Trajectory ref = nonlinear_solve(F, u, 1.0, 1e-4, fine);
  auto err = [&](double dt) {
    const Trajectory tr = nonlinear_solve(F, u, 1.0, dt);
    return s0.norm(tr.column(tr.size() - 1) - ref.column(ref.size() - 1));
  };
  const double slope = std::log2(err(0.02) / err(0.01));

  auto mw = dirichlet(Variant::wave, 32);
  const NonlinearOperator Fw(mw, cubic(Variant::wave));
  const State uw = scaled(random_state(mw, rng), SobolevScale(mw, 0.0), 0.5);
  const Trajectory tr = nonlinear_solve(Fw, uw, 2 * M_PI, 2 * M_PI / 6283);
  const double e0 = energy(Fw, uw);
  double drift = 0.0;
  for (int i = 0; i < tr.size(); ++i) drift = std::max(drift, std::abs(energy(Fw, tr.column(i)) - e0) / e0);

  auto mn = dirichlet(Variant::nls, 24);
  const NonlinearOperator Fn(mn, cubic(Variant::nls));
  const State un = random_state(mn, rng);
  const Trajectory tn = nonlinear_solve(Fn, un, 0.1, 1e-3);
  double mass = 0.0;
  for (int i = 1; i < tn.size(); ++i) {
    const double a = tn.column(i - 1).squaredNorm(), b = tn.column(i).squaredNorm();
    mass = std::max(mass, std::abs(b - a) / a);
  }
  return {slope >= 1.9 && slope <= 2.1 && drift <= 1e-6 && mass <= 1e-10,
          "Strang slope " + fmt(slope) + ", energy drift " + fmt(drift) + ", NLS mass per step " +
              fmt(mass)};
}

// 10 --------------------------------------------------------------------
std::map<std::string, std::string> file_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      out[fs::relative(e.path(), root).string()] = s.str();
    }
  return out;
}

double max_numeric_gap(const io::Json& a, const io::Json& b) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    return std::abs(x - y) / std::max(1.0, std::abs(x));
  }
  if (a.type() != b.type()) return INFINITY;
  double gap = 0.0;
  if (a.is_object()) {
    for (const auto& kv : a.items())
      gap = std::max(gap, b.contains(kv.key()) ? max_numeric_gap(kv.value(), b[kv.key()]) : INFINITY);
  } else if (a.is_array()) {
    if (a.size() != b.size()) return INFINITY;
    for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, max_numeric_gap(a[i], b[i]));
  }
  return gap;
}

Outcome determinism() {
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const fs::path root = fs::temp_directory_path() / "modalrecon_acceptance";
  fs::remove_all(root);
  const std::pair<const char*, const char*> runs[] = {{"simulate", "simulate_nls"},
                                                      {"gramian", "gramian_full"},
                                                      {"reconstruct", "reconstruct_wave"},
                                                      {"analyticity", "analyticity_wave"},
                                                      {"commutator", "commutator"},
                                                      {"sweep", "sweep_threshold"}};
  int identical = 0;
  double gap = 0.0;
  for (const auto& [sub, name] : runs) {
    const io::Scenario sc = io::load_scenario(std::string(MODALRECON_SCENARIO_DIR) + "/" + name + ".yaml");
    io::RunOptions a, b, c;
    a.out_dir = root / name / "a";
    b.out_dir = root / name / "b";
    c.out_dir = root / name / "threads4";
    c.threads = 4;
    const io::RunManifest ma = io::run(sub, sc, a);
    io::run(sub, sc, b);
    const io::RunManifest mc = io::run(sub, sc, c);
    if (file_tree(a.out_dir) == file_tree(b.out_dir)) ++identical;
    gap = std::max(gap, max_numeric_gap(ma.summary, mc.summary));
  }
  unsetenv("SOURCE_DATE_EPOCH");
  const int total = static_cast<int>(std::size(runs));
  return {identical == total && gap <= 1e-12,
          std::to_string(identical) + "/" + std::to_string(total) +
              " scenarios byte-identical, max summary gap at 4 threads " + fmt(gap)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"spectral exactness", spectral_exactness},
      {"conservative propagation", conservative_propagation},
      {"Gramian closed form and observability inequality", gramian_closed_form},
      {"GCC times against ray tracing", gcc_times},
      {"linear reconstruction exactness", linear_reconstruction},
      {"nonlinear reconstruction (wave, nls linearized, plate)", nonlinear_reconstruction},
      {"smallness mechanism", smallness_mechanism},
      {"analyticity diagnostics", analyticity},
      {"integrator quality", integrator_quality},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures;
}
