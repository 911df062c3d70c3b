#pragma once

// Subcommand orchestration. Each run writes its result files and a
// manifest.json into one output directory; sweeps give every point its own
// subdirectory and write the combined table and manifest once at the end.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "modalrecon/diagnostics.hpp"
#include "modalrecon/error.hpp"
#include "modalrecon/gramian.hpp"
#include "modalrecon/integrators.hpp"
#include "modalrecon/io/output.hpp"
#include "modalrecon/io/scenario.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/parallel.hpp"
#include "modalrecon/random.hpp"
#include "modalrecon/reconstruction.hpp"

#ifndef MODALRECON_VERSION
#define MODALRECON_VERSION "0.0.0"
#endif

namespace modalrecon::io {

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "gramian",     "gcc",       "reconstruct",
                                              "analyticity", "sweep", "commutator"};
  return names;
}

struct RunOptions {
  std::filesystem::path out_dir;  ///< empty: the scenario's run.output_dir
  int threads = 1;
  bool verbose = false;
  std::ostream* log = &std::cerr;
};

struct RunManifest {
  std::string subcommand;
  std::string scenario_hash;
  std::string version = MODALRECON_VERSION;
  std::string started_utc;
  std::string finished_utc;
  std::filesystem::path out_dir;
  std::vector<std::string> outputs;  ///< relative to out_dir
  Json summary = Json::object();
  bool failed = false;
  std::string failure;

  /// 0 on success, 3 on numerical failure.
  int exit_code() const { return failed ? 3 : 0; }
};

inline Json to_json(const RunManifest& m) {
  Json j;
  j["subcommand"] = m.subcommand;
  j["scenario_hash"] = m.scenario_hash;
  j["version"] = m.version;
  j["started_utc"] = m.started_utc;
  j["finished_utc"] = m.finished_utc;
  j["status"] = m.failed ? "numerical_failure" : "ok";
  j["failure"] = m.failure;
  j["outputs"] = m.outputs;
  j["summary"] = m.summary;
  return j;
}

/// Initial state u0 with ||u0||_sigma = amplitude. The random profile draws
/// zeta_k = (g + i g') exp(-decay k) / (k + 1) from the scenario seed.
inline State make_initial_state(const Scenario& sc, const ModelPtr& model) {
  const int n = model->n_modes();
  const SobolevScale scale(model, sc.scale.sigma);
  Eigen::VectorXcd z = Eigen::VectorXcd::Zero(n);
  if (sc.initial.profile == "mode") {
    z(sc.initial.mode) = 1.0;
  } else {
    Rng rng(sc.run.seed);
    for (int k = 0; k < n; ++k) {
      const double a = std::exp(-sc.initial.decay * k) / (k + 1.0);
      const double re = rng.normal();
      const double im = rng.normal();
      z(k) = {a * re, a * im};
    }
  }
  State u(model, from_normalized(*model, z));
  const double nrm = norm_sigma(u, scale);
  if (nrm > 0.0) u *= sc.initial.amplitude / nrm;
  return u;
}

inline ObservationOperator make_observation(const Scenario& sc, const ModelPtr& model) {
  return build_observation(model, sc.observation.omega, sc.observation.window,
                           sc.observation.smoothing);
}

inline ModeSet gramian_subspace(const Scenario& sc, const ModelOperator& m) {
  const std::string& kind = sc.gramian.subspace;
  if (kind == "list") return sc.gramian.modes;
  if (kind == "all") return all_modes(m);
  if (kind == "low") return low_modes(m, sc.reconstruction.threshold_n);
  if (kind == "high") return high_modes(m, sc.reconstruction.threshold_n);
  return sc.reconstruction.threshold_n > 0.0 ? high_modes(m, sc.reconstruction.threshold_n)
                                             : all_modes(m);
}

namespace detail {

class Runner {
 public:
  Runner(const Scenario& sc, RunManifest& man, const RunOptions& opt)
      : sc_(sc), man_(man), opt_(opt), hash_(man.scenario_hash) {}

  void log(const std::string& msg) const {
    if (opt_.verbose && opt_.log) *opt_.log << "[" << man_.subcommand << "] " << msg << "\n";
  }

  std::filesystem::path file(const std::string& name) {
    man_.outputs.push_back(name);
    return man_.out_dir / name;
  }

  Json header(const std::optional<double>& condition) const {
    Json j;
    j["scenario_hash"] = hash_;
    j["version"] = MODALRECON_VERSION;
    j["gramian_condition"] = condition ? num(*condition) : Json();
    return j;
  }

  static std::string cond_text(const std::optional<double>& c) {
    return c ? format17(*c) : std::string("none");
  }

  void simulate() {
    const ModelPtr model = sc_.build_model();
    const NonlinearOperator F(model, sc_.build_nonlinearity());
    const State u0 = make_initial_state(sc_, model);
    SolveOptions so;
    so.integrator = sc_.run.integrator;
    so.record_stride = sc_.run.record_stride;
    log("nonlinear_solve over T = " + format17(sc_.run.T_total));
    Json res = header(std::nullopt);
    res["integrator"] = std::string(to_string(so.integrator));
    res["dt"] = sc_.run.dt;
    try {
      const Trajectory tr = nonlinear_solve(F, u0, sc_.run.T_total, sc_.run.dt, so);
      write_trajectory_csv(file("trajectory.csv"), tr, hash_, "none");
      const SobolevScale scale(model, sc_.scale.sigma);
      std::vector<std::vector<Json>> rows;
      const double e0 = energy(F, tr.column(0));
      const double m0 = tr.column(0).head(model->n_modes()).squaredNorm() +
                        (model->second_order() ? 0.0 : tr.column(0).tail(model->n_modes()).squaredNorm());
      double drift = 0.0, mass_drift = 0.0;
      for (int m = 0; m < tr.size(); ++m) {
        const double e = energy(F, tr.column(m));
        const double ms = tr.column(m).head(model->n_modes()).squaredNorm() +
                          (model->second_order() ? 0.0 : tr.column(m).tail(model->n_modes()).squaredNorm());
        drift = std::max(drift, std::abs(e - e0) / std::max(std::abs(e0), 1e-300));
        mass_drift = std::max(mass_drift, std::abs(ms - m0) / std::max(m0, 1e-300));
        rows.push_back({tr.grid().time(m), e, ms, scale.norm(tr.column(m))});
      }
      write_table_csv(file("energy.csv"), {"time", "energy", "l2_mass", "norm_sigma"}, rows, hash_,
                      "none");
      res["status"] = "ok";
      res["steps"] = make_time_grid(sc_.run.T_total, sc_.run.dt).steps;
      res["energy_initial"] = num(e0);
      res["energy_max_relative_drift"] = num(drift);
      res["mass_max_relative_drift"] = num(mass_drift);
      res["final_norm_sigma"] = num(scale.norm(tr.column(tr.size() - 1)));
      man_.summary["energy_max_relative_drift"] = num(drift);
      man_.summary["mass_max_relative_drift"] = num(mass_drift);
    } catch (const BlowUpError& e) {
      res["status"] = "blow_up";
      res["blow_up_time"] = e.time();
      man_.failed = true;
      man_.failure = std::string("nonlinear_solve: ") + e.what();
      man_.summary["blow_up_time"] = e.time();
    }
    write_json(file("simulate.json"), res);
  }

  void gramian_cmd() {
    const ModelPtr model = sc_.build_model();
    const ObservationOperator obs = make_observation(sc_, model);
    const SobolevScale scale(model, sc_.scale.sigma);
    const ModeSet S = gramian_subspace(sc_, *model);
    modalrecon::detail::require(!S.empty(), "gramian: selected subspace is empty");
    GramianOptions go;
    go.time_nodes = sc_.gramian.time_nodes;
    go.rank_tolerance = sc_.reconstruction.rank_tolerance;
    go.threads = opt_.threads;
    log("gramian on " + std::to_string(S.size()) + " modes");
    const GramianReport r = gramian(obs, scale, S, go);
    Json res = header(r.observable ? std::optional<double>(r.condition) : std::nullopt);
    res["report"] = to_json(r);
    write_json(file("gramian.json"), res);
    man_.summary["min_eig"] = num(r.min_eig);
    man_.summary["max_eig"] = num(r.max_eig);
    man_.summary["obs_constant"] = num(r.obs_constant);
    man_.summary["condition"] = num(r.condition);
    if (!r.observable) {
      man_.failed = true;
      man_.failure = "gramian: not observable at tolerance";
    }
  }

  void gcc() {
    const double t = gcc_time(sc_.model.length, sc_.model.boundary, sc_.observation.omega);
    Json res = header(std::nullopt);
    res["gcc_time"] = t;
    res["gcc_time_over_pi"] = t / M_PI;
    res["window"] = sc_.observation.window;
    res["window_exceeds_gcc_time"] = sc_.observation.window > t;
    write_json(file("gcc.json"), res);
    man_.summary["gcc_time"] = t;
    std::cout << format17(t) << "\n";
  }

  void reconstruct() {
    const ModelPtr model = sc_.build_model();
    const NonlinearOperator F(model, sc_.build_nonlinearity());
    const ObservationOperator obs = make_observation(sc_, model);
    const SobolevScale scale(model, sc_.scale.sigma);
    const State u0 = make_initial_state(sc_, model);
    DeterminingModesOptions dm;
    dm.truth_refine = sc_.run.truth_refine;
    dm.noise = sc_.run.noise;
    dm.seed = sc_.run.seed;
    dm.run_low_ode = sc_.run.low_ode;
    dm.low_ode.period = sc_.run.low_ode_period;
    log("determining_modes_experiment, n = " + format17(sc_.reconstruction.threshold_n));
    const DeterminingModesReport rep = determining_modes_experiment(
        obs, F, scale, u0, sc_.run.T_total, sc_.run.dt, sc_.reconstruction, dm);
    const std::optional<double> cond =
        rep.gramian.observable ? std::optional<double>(rep.gramian.condition) : std::nullopt;
    Json res = header(cond);
    res["threshold_n"] = rep.threshold_n;
    res["variant"] = std::string(to_string(sc_.reconstruction.variant));
    res["window"] = rep.window;
    res["status"] = rep.status;
    res["failed"] = rep.failed;
    res["failure"] = rep.failure;
    res["iterations"] = rep.iterations;
    res["contraction_profile"] = num_list(rep.contraction_profile);
    res["low_error"] = num(rep.low_error);
    res["high_error"] = num(rep.high_error);
    res["total_error"] = num(rep.total_error);
    res["high_norm"] = num(rep.high_norm);
    res["relative_high_error"] = num(rep.relative_high_error);
    res["residual_observation"] = num(rep.residual_observation);
    res["gramian"] = to_json(rep.gramian, false);
    // Smallness prediction from the gain of derivatives.
    const GainReport gain =
        gain_probe(F, sc_.scale.sigma, sc_.scale.eps, std::max(sc_.initial.amplitude, 1e-12), 64,
                   sc_.run.seed);
    res["gain"] = {{"eps", sc_.scale.eps},
                   {"sample_radius", sc_.initial.amplitude},
                   {"ratio_sup", num(gain.ratio_sup)},
                   {"raw_sup", num(gain.raw_sup)},
                   {"predicted_threshold",
                    num(rep.gramian.observable
                            ? predicted_threshold(rep.gramian.obs_constant, gain.ratio_sup,
                                                  sc_.scale.eps)
                            : std::numeric_limits<double>::infinity())}};
    write_json(file("reconstruct.json"), res);
    if (rep.reconstruction)
      write_trajectory_csv(file("reconstruction.csv"), *rep.reconstruction, hash_,
                           cond_text(cond));
    if (rep.truth)
      write_trajectory_csv(file("truth_high.csv"),
                           modalrecon::detail::high_part_of(*rep.truth, rep.threshold_n), hash_,
                           cond_text(cond));
    man_.summary["status"] = rep.status;
    man_.summary["iterations"] = rep.iterations;
    man_.summary["first_contraction"] =
        rep.contraction_profile.empty() ? Json() : num(rep.contraction_profile.front());
    man_.summary["last_contraction"] =
        rep.contraction_profile.empty() ? Json() : num(rep.contraction_profile.back());
    man_.summary["high_error"] = num(rep.high_error);
    man_.summary["relative_high_error"] = num(rep.relative_high_error);
    man_.summary["gramian_condition"] = cond ? num(*cond) : Json();
    if (rep.failed) {
      man_.failed = true;
      man_.failure = "reconstruct: " + rep.failure;
    }
  }

  void analyticity() {
    const ModelPtr model = sc_.build_model();
    const NonlinearOperator F(model, sc_.build_nonlinearity());
    const State u0 = make_initial_state(sc_, model);
    std::optional<CutoffProfile> chi;
    if (!sc_.observation.omega.empty())
      chi.emplace(sc_.model.length, sc_.model.boundary, sc_.observation.omega,
                  sc_.observation.smoothing);
    double t_max = 0.0;
    for (double t : sc_.analyticity.times) t_max = std::max(t_max, t);
    std::optional<Trajectory> path;
    if (t_max > 0.0) {
      SolveOptions so;
      so.integrator = sc_.run.integrator;
      path = nonlinear_solve(F, u0, t_max, sc_.run.dt, so);
    }
    Json res = header(std::nullopt);
    res["K"] = sc_.analyticity.K;
    res["sigma"] = sc_.scale.sigma;
    Json list = Json::array();
    auto report_json = [](const AnalyticityReport& r) {
      Json j;
      j["radius_estimate"] = num(r.radius_estimate);
      j["entire"] = r.entire;
      j["fit_slope"] = num(r.fit_slope);
      j["fit_quality"] = num(r.fit_quality);
      j["derivative_norms"] = num_list(r.derivative_norms);
      return j;
    };
    for (double t : sc_.analyticity.times) {
      State s = u0;
      if (t > 0.0) {
        const double steps = t / sc_.run.dt;
        modalrecon::detail::require(std::abs(steps - std::round(steps)) <= 1e-9 * std::max(1.0, steps),
                        "analyticity.times: each time must be a multiple of run.dt");
        s = path->state(static_cast<int>(std::round(steps)));
      }
      Json e;
      e["eval_time"] = t;
      e["global"] = report_json(analyticity_radius(F, s, sc_.scale.sigma, sc_.analyticity.K,
                                                   nullptr, t));
      if (chi)
        e["localized"] = report_json(analyticity_radius(F, s, sc_.scale.sigma,
                                                        sc_.analyticity.K, &*chi, t));
      list.push_back(e);
    }
    res["reports"] = list;
    write_json(file("analyticity.json"), res);
    const Json& first = list.front()["global"];
    man_.summary["radius_estimate_t0"] = first["radius_estimate"];
    man_.summary["fit_quality_t0"] = first["fit_quality"];
  }

  void commutator() {
    const double s = sc_.commutator.s;
    std::vector<std::vector<Json>> rows;
    std::vector<double> lx, ly;
    Json table = Json::array();
    for (int N : sc_.commutator.n_modes) {
      const int grid = std::max(4 * N, sc_.model.grid_size > 0
                                           ? sc_.model.grid_size * N / sc_.model.n_modes
                                           : 4 * N);
      const ModelPtr model = modalrecon::build_model({sc_.model.variant, sc_.model.boundary},
                                                     sc_.model.length, sc_.model.beta, N, grid);
      const ObservationOperator obs = make_observation(sc_, model);
      const double norm = commutator_diagnostic(obs, s, sc_.scale.sigma, sc_.scale.eps);
      rows.push_back({N, norm});
      table.push_back({{"n_modes", N}, {"norm", num(norm)}});
      if (norm > 0.0) {
        lx.push_back(std::log(static_cast<double>(N)));
        ly.push_back(std::log(norm));
      }
    }
    double exponent = 0.0;
    if (lx.size() >= 2) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
      mx /= lx.size();
      my /= ly.size();
      double sxx = 0, sxy = 0;
      for (std::size_t i = 0; i < lx.size(); ++i)
        sxx += (lx[i] - mx) * (lx[i] - mx), sxy += (lx[i] - mx) * (ly[i] - my);
      exponent = sxy / sxx;
    }
    write_table_csv(file("commutator.csv"), {"n_modes", "norm"}, rows, hash_, "none");
    Json res = header(std::nullopt);
    res["s"] = s;
    res["sigma"] = sc_.scale.sigma;
    res["eps"] = sc_.scale.eps;
    res["table"] = table;
    res["growth_exponent"] = num(exponent);
    write_json(file("commutator.json"), res);
    man_.summary["growth_exponent"] = num(exponent);
  }

 private:
  const Scenario& sc_;
  RunManifest& man_;
  const RunOptions& opt_;
  std::string hash_;
};

}  // namespace detail

RunManifest run(const std::string& subcommand, const Scenario& sc, const RunOptions& options = {});

namespace detail {

inline RunManifest run_sweep(const Scenario& sc, RunManifest man, const RunOptions& opt) {
  const auto& params = sc.sweep.parameters;
  modalrecon::detail::require(!params.empty(), "sweep: sweep.parameters is empty");
  std::size_t count = 1;
  for (const auto& p : params) count *= p.values.size();
  // Points in row-major order over the declared parameters.
  std::vector<Scenario> points;
  std::vector<std::vector<std::string>> labels;
  for (std::size_t i = 0; i < count; ++i) {
    YAML::Node doc = YAML::Clone(sc.document);
    doc.remove("sweep");
    std::size_t rest = i;
    std::vector<std::string> lab(params.size());
    for (std::size_t q = params.size(); q-- > 0;) {
      const auto& p = params[q];
      const std::size_t k = rest % p.values.size();
      rest /= p.values.size();
      doc = with_override(doc, p.path, p.values[k]);
      lab[q] = YAML::Dump(p.values[k]);
    }
    points.push_back(parse_scenario(doc, sc.source + " (sweep point " + std::to_string(i) + ")"));
    labels.push_back(std::move(lab));
  }
  std::vector<RunManifest> results(count);
  std::vector<std::string> errors(count);
  parallel_for(static_cast<int>(count), opt.threads, [&](int i) {
    RunOptions sub = opt;
    sub.threads = 1;
    char name[32];
    std::snprintf(name, sizeof name, "point_%03d", i);
    sub.out_dir = man.out_dir / name;
    try {
      results[i] = run(sc.sweep.subcommand, points[i], sub);
    } catch (const Error& e) {
      errors[i] = e.what();
      results[i].failed = true;
      results[i].failure = e.what();
    }
  });
  std::vector<std::string> header{"point"};
  for (const auto& p : params) header.push_back(p.path);
  header.push_back("run_status");
  std::vector<std::string> keys;
  for (const auto& r : results)
    for (const auto& kv : r.summary.items())
      if (std::find(keys.begin(), keys.end(), kv.key()) == keys.end()) keys.push_back(kv.key());
  for (const auto& k : keys) header.push_back(k);
  std::vector<std::vector<Json>> rows;
  Json points_json = Json::array();
  int failures = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<Json> row{static_cast<int>(i)};
    Json pj;
    char name[32];
    std::snprintf(name, sizeof name, "point_%03zu", i);
    pj["directory"] = name;
    for (std::size_t q = 0; q < params.size(); ++q) {
      row.push_back(labels[i][q]);
      pj["parameters"][params[q].path] = labels[i][q];
    }
    row.push_back(results[i].failed ? "failed" : "ok");
    for (const auto& k : keys)
      row.push_back(results[i].summary.contains(k) ? results[i].summary[k] : Json());
    rows.push_back(row);
    pj["status"] = results[i].failed ? "failed" : "ok";
    pj["failure"] = results[i].failure;
    pj["summary"] = results[i].summary;
    points_json.push_back(pj);
    if (results[i].failed) ++failures;
    for (const auto& o : results[i].outputs) man.outputs.push_back(std::string(name) + "/" + o);
  }
  write_table_csv(man.out_dir / "sweep_table.csv", header, rows, man.scenario_hash, "per-point");
  man.outputs.push_back("sweep_table.csv");
  man.summary["points"] = static_cast<int>(count);
  man.summary["failed_points"] = failures;
  man.summary["point_results"] = points_json;
  return man;
}

}  // namespace detail

/// Runs one subcommand and writes its outputs plus manifest.json. Validation
/// problems throw ValidationError; numerical failures are recorded in the
/// manifest (exit_code() == 3) after the diagnostic report is written.
inline RunManifest run(const std::string& subcommand, const Scenario& sc,
                       const RunOptions& options) {
  if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
    throw ValidationError("unknown subcommand '" + subcommand + "'");
  RunManifest man;
  man.subcommand = subcommand;
  man.scenario_hash = scenario_hash(sc);
  man.started_utc = utc_timestamp();
  man.out_dir = options.out_dir.empty() ? std::filesystem::path(sc.run.output_dir) : options.out_dir;
  std::filesystem::create_directories(man.out_dir);
  if (subcommand == "sweep") {
    man = detail::run_sweep(sc, std::move(man), options);
  } else {
    detail::Runner r(sc, man, options);
    try {
      if (subcommand == "simulate") r.simulate();
      else if (subcommand == "gramian") r.gramian_cmd();
      else if (subcommand == "gcc") r.gcc();
      else if (subcommand == "reconstruct") r.reconstruct();
      else if (subcommand == "analyticity") r.analyticity();
      else if (subcommand == "commutator") r.commutator();
    } catch (const ValidationError& e) {
      throw ValidationError(subcommand + ": " + e.what());
    } catch (const NumericalError& e) {
      man.failed = true;
      man.failure = subcommand + ": " + e.what();
    }
  }
  man.finished_utc = utc_timestamp();
  man.outputs.push_back("manifest.json");
  write_json(man.out_dir / "manifest.json", to_json(man));
  return man;
}

}  // namespace modalrecon::io
