#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "modalrecon/error.hpp"
#include "modalrecon/gramian.hpp"
#include "modalrecon/io/scenario.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"

namespace modalrecon::io {

using Json = nlohmann::ordered_json;

/// Finite numbers as numbers, the rest as "inf", "-inf" or "nan".
inline Json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline Json num_list(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline Json num_list(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

inline Json matrix_json(const Eigen::MatrixXd& M) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(num_list(Eigen::VectorXd(M.row(i))));
  return a;
}

inline std::string format17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline Json to_json(const Scenario& sc) {
  Json j;
  j["model"] = {{"variant", std::string(to_string(sc.model.variant))},
                {"boundary", std::string(to_string(sc.model.boundary))},
                {"length", sc.model.length},
                {"beta", sc.model.beta},
                {"n_modes", sc.model.n_modes},
                {"grid_size", sc.model.grid_size > 0 ? sc.model.grid_size : 4 * sc.model.n_modes}};
  j["nonlinearity"] = {{"coefficients", num_list(sc.nonlinearity.coefficients)},
                       {"gamma", sc.nonlinearity.gamma ? num(*sc.nonlinearity.gamma) : Json()}};
  Json om = Json::array();
  for (const auto& iv : sc.observation.omega) om.push_back({iv.a, iv.b});
  j["observation"] = {{"omega", om},
                      {"smoothing", sc.observation.smoothing},
                      {"window", sc.observation.window}};
  j["scale"] = {{"sigma", sc.scale.sigma}, {"eps", sc.scale.eps}};
  const auto& r = sc.reconstruction;
  j["reconstruction"] = {{"threshold_n", r.threshold_n},
                         {"ball_radius", num(r.ball_radius)},
                         {"max_iters", r.max_iters},
                         {"fix_tol", r.fix_tol},
                         {"gramian_nodes", r.gramian_nodes},
                         {"variant", std::string(to_string(r.variant))},
                         {"rank_tolerance", r.rank_tolerance}};
  j["initial"] = {{"profile", sc.initial.profile},
                  {"amplitude", sc.initial.amplitude},
                  {"decay", sc.initial.decay},
                  {"mode", sc.initial.mode}};
  j["run"] = {{"T_total", sc.run.T_total},
              {"dt", sc.run.dt},
              {"seed", sc.run.seed},
              {"integrator", std::string(to_string(sc.run.integrator))},
              {"record_stride", sc.run.record_stride},
              {"truth_refine", sc.run.truth_refine},
              {"noise", sc.run.noise},
              {"low_ode", sc.run.low_ode},
              {"low_ode_period", sc.run.low_ode_period}};
  j["gramian"] = {{"subspace", sc.gramian.subspace},
                  {"modes", sc.gramian.modes},
                  {"time_nodes", sc.gramian.time_nodes}};
  j["analyticity"] = {{"K", sc.analyticity.K}, {"times", num_list(sc.analyticity.times)}};
  j["commutator"] = {{"s", sc.commutator.s}, {"n_modes", sc.commutator.n_modes}};
  Json params = Json::object();
  for (const auto& p : sc.sweep.parameters) {
    Json vals = Json::array();
    for (const auto& v : p.values) vals.push_back(YAML::Dump(v));
    params[p.path] = vals;
  }
  j["sweep"] = {{"subcommand", sc.sweep.subcommand}, {"parameters", params}};
  return j;
}

/// Hash of the canonical (parsed, defaults filled) scenario. The output
/// directory is not part of it.
inline std::string scenario_hash(const Scenario& sc) { return hex64(fnv1a(to_json(sc).dump())); }

/// CSV of a trajectory: one comment line with provenance, then a header row
/// (time, first-component coordinates, second-component coordinates) and
/// one row per node at 17 significant digits.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr,
                                 const std::string& hash, const std::string& condition) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const ModelOperator& m = *tr.model();
  const int n = m.n_modes();
  const bool nls = !m.second_order();
  out << "# scenario_hash=" << hash << " gramian_condition=" << condition
      << " integrator=" << tr.integrator_tag() << "\n";
  out << "time";
  for (int k = 0; k < n; ++k) out << ',' << (nls ? "re_" : "u_") << k;
  for (int k = 0; k < n; ++k) out << ',' << (nls ? "im_" : "v_") << k;
  out << "\n";
  for (int c = 0; c < tr.size(); ++c) {
    out << format17(tr.grid().time(c));
    for (int r = 0; r < 2 * n; ++r) out << ',' << format17(tr.coords()(r, c));
    out << "\n";
  }
}

/// Generic CSV table with a provenance comment line.
inline void write_table_csv(const std::filesystem::path& path,
                            const std::vector<std::string>& header,
                            const std::vector<std::vector<Json>>& rows, const std::string& hash,
                            const std::string& condition) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# scenario_hash=" << hash << " gramian_condition=" << condition << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      const Json& v = row[i];
      if (v.is_number_float())
        out << format17(v.get<double>());
      else if (v.is_string())
        out << v.get<std::string>();
      else if (v.is_null())
        out << "";
      else
        out << v.dump();
    }
    out << "\n";
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline Json to_json(const GramianReport& r, bool with_matrix = true) {
  Json j;
  j["subspace"] = r.subspace;
  j["observable"] = r.observable;
  j["min_eig"] = num(r.min_eig);
  j["max_eig"] = num(r.max_eig);
  j["obs_constant"] = num(r.obs_constant);
  j["condition"] = num(r.condition);
  j["rank_tolerance"] = r.rank_tolerance;
  j["window"] = num(r.window);
  j["sigma"] = r.sigma;
  j["time_nodes"] = r.time_nodes;
  j["quadrature"] = r.quadrature;
  j["smooth_cutoff"] = r.smooth_cutoff;
  j["eigenvalues"] = num_list(r.eigenvalues);
  if (with_matrix) j["matrix"] = matrix_json(r.matrix);
  return j;
}

/// ISO-8601 UTC time; honours SOURCE_DATE_EPOCH for reproducible manifests.
inline std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::atoll(e));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace modalrecon::io
