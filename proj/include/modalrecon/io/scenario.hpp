#pragma once

// Scenario files: YAML with fixed top-level blocks. Every field is checked
// at load time; errors name the file, line and dotted field path.
// Real-valued fields also accept multiples of pi written as "pi", "0.3pi",
// "0.3*pi", "pi/4" or "3*pi/4", and ".inf".

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "modalrecon/error.hpp"
#include "modalrecon/integrators.hpp"
#include "modalrecon/nonlinearity.hpp"
#include "modalrecon/observation.hpp"
#include "modalrecon/reconstruction.hpp"
#include "modalrecon/spectral.hpp"

namespace modalrecon::io {

struct ModelBlock {
  Variant variant = Variant::wave;
  Boundary boundary = Boundary::dirichlet_interval;
  double length = M_PI;
  double beta = 0.0;
  int n_modes = 16;
  int grid_size = 0;  ///< 0: 4 n_modes
};

struct NonlinearityBlock {
  std::vector<double> coefficients;
  std::optional<double> gamma;
};

struct ObservationBlock {
  std::vector<Interval> omega;
  double smoothing = 0.0;
  double window = 1.0;
};

struct ScaleBlock {
  double sigma = 0.0;
  double eps = 0.5;
};

struct InitialBlock {
  std::string profile = "random";  ///< random | mode
  double amplitude = 0.1;          ///< X^sigma norm of u0
  double decay = 1.0;              ///< random: |zeta_k| ~ exp(-decay k) / (k + 1)
  int mode = 0;                    ///< mode: index of the excited mode
};

struct RunBlock {
  double T_total = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  Integrator integrator = Integrator::strang;
  int record_stride = 1;
  int truth_refine = 4;
  double noise = 0.0;
  bool low_ode = false;
  double low_ode_period = 0.0;
};

struct GramianBlock {
  std::string subspace = "auto";  ///< auto | all | high | low | list
  ModeSet modes;
  int time_nodes = 0;
};

struct AnalyticityBlock {
  int K = 24;
  std::vector<double> times{0.0};
};

struct CommutatorBlock {
  double s = 0.5;
  std::vector<int> n_modes{16, 32, 64};
};

struct SweepParameter {
  std::string path;
  std::vector<YAML::Node> values;
};

struct SweepBlock {
  std::string subcommand = "reconstruct";
  std::vector<SweepParameter> parameters;
};

struct Scenario {
  std::string source;  ///< file name used in messages
  YAML::Node document;
  ModelBlock model;
  NonlinearityBlock nonlinearity;
  ObservationBlock observation;
  ScaleBlock scale;
  ReconstructionConfig reconstruction;
  std::optional<int> split_top;
  InitialBlock initial;
  RunBlock run;
  GramianBlock gramian;
  AnalyticityBlock analyticity;
  CommutatorBlock commutator;
  SweepBlock sweep;

  ModelPtr build_model() const {
    return modalrecon::build_model({model.variant, model.boundary}, model.length, model.beta,
                                   model.n_modes,
                                   model.grid_size > 0 ? model.grid_size : 4 * model.n_modes);
  }
  Nonlinearity build_nonlinearity() const {
    return make_nonlinearity(model.variant, nonlinearity.coefficients, nonlinearity.gamma);
  }
};

namespace detail {

class FieldError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline std::string location(const std::string& source, const YAML::Node& node) {
  if (!node.IsDefined()) return source;
  const YAML::Mark mark = node.Mark();
  if (mark.line < 0) return source;
  return source + ":" + std::to_string(mark.line + 1);
}

[[noreturn]] inline void fail(const std::string& source, const YAML::Node& node,
                              const std::string& path, const std::string& msg) {
  throw FieldError(location(source, node) + ": " + path + ": " + msg);
}

inline std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) return std::nullopt;
  return v;
}

/// Real literal with optional pi factor.
inline std::optional<double> parse_real_text(std::string text) {
  std::string t;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) t += static_cast<char>(std::tolower(c));
  if (t == ".inf" || t == "inf" || t == "+.inf" || t == "infinity")
    return std::numeric_limits<double>::infinity();
  if (t == "-.inf" || t == "-inf") return -std::numeric_limits<double>::infinity();
  const auto p = t.find("pi");
  if (p == std::string::npos) return parse_number(t);
  std::string before = t.substr(0, p), after = t.substr(p + 2);
  if (!before.empty() && before.back() == '*') before.pop_back();
  double factor = 1.0;
  if (before == "-")
    factor = -1.0;
  else if (!before.empty()) {
    auto v = parse_number(before);
    if (!v) return std::nullopt;
    factor = *v;
  }
  double divisor = 1.0;
  if (!after.empty()) {
    if (after[0] != '/') return std::nullopt;
    auto v = parse_number(after.substr(1));
    if (!v || *v == 0.0) return std::nullopt;
    divisor = *v;
  }
  return factor * M_PI / divisor;
}

/// Typed access to one mapping block with unknown-key detection.
class Block {
 public:
  Block(std::string source, YAML::Node node, std::string path)
      : source_(std::move(source)), node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(source_, node_, path_, "expected a mapping");
  }

  bool present() const { return node_ && node_.IsMap(); }
  bool has(const std::string& key) const { return present() && node_[key]; }
  const YAML::Node& node() const { return node_; }

  void allow(std::initializer_list<const char*> keys) const {
    if (!present()) return;
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(source_, kv.first, join(key), "unknown field");
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node get(const std::string& key) const {
    return present() ? node_[key] : YAML::Node(YAML::NodeType::Undefined);
  }

  double real(const std::string& key, double fallback) const {
    const YAML::Node v = get(key);
    if (!v) return fallback;
    return real_value(v, join(key));
  }

  double real_required(const std::string& key) const {
    const YAML::Node v = get(key);
    if (!v) fail(source_, node_, join(key), "required field missing");
    return real_value(v, join(key));
  }

  std::optional<double> optional_real(const std::string& key) const {
    const YAML::Node v = get(key);
    if (!v || v.IsNull()) return std::nullopt;
    return real_value(v, join(key));
  }

  long long integer(const std::string& key, long long fallback) const {
    const YAML::Node v = get(key);
    if (!v) return fallback;
    return integer_value(v, join(key));
  }

  bool boolean(const std::string& key, bool fallback) const {
    const YAML::Node v = get(key);
    if (!v) return fallback;
    if (!v.IsScalar()) fail(source_, v, join(key), "expected true or false");
    const std::string s = v.Scalar();
    if (s == "true" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "no" || s == "off") return false;
    fail(source_, v, join(key), "expected true or false, got '" + s + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    const YAML::Node v = get(key);
    if (!v) return fallback;
    if (!v.IsScalar()) fail(source_, v, join(key), "expected a string");
    return v.Scalar();
  }

  std::string choice(const std::string& key, const std::string& fallback,
                     std::initializer_list<const char*> options) const {
    const std::string s = text(key, fallback);
    for (const char* o : options)
      if (s == o) return s;
    std::string list;
    for (const char* o : options) list += (list.empty() ? "" : ", ") + std::string(o);
    fail(source_, get(key), join(key), "expected one of {" + list + "}, got '" + s + "'");
  }

  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    const YAML::Node v = get(key);
    if (!v) return fallback;
    if (!v.IsSequence()) fail(source_, v, join(key), "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(real_value(v[i], join(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::vector<long long> integers(const std::string& key, std::vector<long long> fallback) const {
    const YAML::Node v = get(key);
    if (!v) return fallback;
    if (!v.IsSequence()) fail(source_, v, join(key), "expected a list of integers");
    std::vector<long long> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(integer_value(v[i], join(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  double real_value(const YAML::Node& v, const std::string& path) const {
    if (!v.IsScalar()) fail(source_, v, path, "expected a number");
    auto r = parse_real_text(v.Scalar());
    if (!r || std::isnan(*r)) fail(source_, v, path, "expected a number, got '" + v.Scalar() + "'");
    return *r;
  }

  long long integer_value(const YAML::Node& v, const std::string& path) const {
    if (!v.IsScalar()) fail(source_, v, path, "expected an integer");
    const std::string& s = v.Scalar();
    char* end = nullptr;
    const long long x = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
      fail(source_, v, path, "expected an integer, got '" + s + "'");
    return x;
  }

  [[noreturn]] void error(const std::string& key, const std::string& msg) const {
    const YAML::Node v = get(key);
    fail(source_, v ? v : node_, join(key), msg);
  }

 private:
  std::string source_;
  YAML::Node node_;
  std::string path_;
};

inline Variant parse_variant(const std::string& s) {
  if (s == "wave") return Variant::wave;
  if (s == "plate") return Variant::plate;
  return Variant::nls;
}

inline ReconstructionVariant parse_reconstruction_variant(const std::string& s) {
  return s == "linearized" ? ReconstructionVariant::linearized : ReconstructionVariant::plain;
}

/// Runs `fn`, re-labelling library ValidationErrors with a field location.
template <class Fn>
void checked(const Block& b, const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const FieldError&) {
    throw;
  } catch (const ValidationError& e) {
    b.error(key, e.what());
  }
}

}  // namespace detail

/// Parses and validates a scenario document.
inline Scenario parse_scenario(const YAML::Node& doc, const std::string& source = "<scenario>") {
  using detail::Block;
  if (!doc.IsMap()) detail::fail(source, doc, "<root>", "scenario must be a mapping");
  Scenario sc;
  sc.source = source;
  sc.document = YAML::Clone(doc);
  const Block root(source, doc, "");
  root.allow({"model", "nonlinearity", "observation", "scale", "reconstruction", "initial", "run",
              "gramian", "analyticity", "commutator", "sweep", "description"});

  const Block mb(source, doc["model"], "model");
  if (!mb.present()) detail::fail(source, doc, "model", "required block missing");
  mb.allow({"variant", "boundary", "length", "beta", "n_modes", "grid_size"});
  sc.model.variant = detail::parse_variant(mb.choice("variant", "wave", {"wave", "plate", "nls"}));
  sc.model.boundary = mb.choice("boundary", "dirichlet_interval",
                                {"dirichlet_interval", "periodic_circle"}) == "periodic_circle"
                          ? Boundary::periodic_circle
                          : Boundary::dirichlet_interval;
  sc.model.length = mb.real("length", M_PI);
  sc.model.beta = mb.real("beta", 0.0);
  sc.model.n_modes = static_cast<int>(mb.integer("n_modes", 16));
  sc.model.grid_size = static_cast<int>(mb.integer("grid_size", 0));
  ModelPtr model;
  detail::checked(mb, "n_modes", [&] { model = sc.build_model(); });

  const Block nb(source, doc["nonlinearity"], "nonlinearity");
  nb.allow({"coefficients", "gamma"});
  sc.nonlinearity.coefficients = nb.reals("coefficients", {});
  sc.nonlinearity.gamma = nb.optional_real("gamma");
  detail::checked(nb, "coefficients", [&] { sc.build_nonlinearity(); });

  const Block ob(source, doc["observation"], "observation");
  ob.allow({"omega", "smoothing", "window"});
  sc.observation.smoothing = ob.real("smoothing", 0.0);
  sc.observation.window = ob.real("window", 1.0);
  if (ob.has("omega")) {
    const YAML::Node om = ob.get("omega");
    if (!om.IsSequence()) ob.error("omega", "expected a list of [a, b] pairs");
    for (std::size_t i = 0; i < om.size(); ++i) {
      const std::string p = "observation.omega[" + std::to_string(i) + "]";
      if (!om[i].IsSequence() || om[i].size() != 2)
        detail::fail(source, om[i], p, "expected a pair [a, b]");
      sc.observation.omega.push_back(
          {ob.real_value(om[i][0], p + "[0]"), ob.real_value(om[i][1], p + "[1]")});
    }
  }
  detail::checked(ob, "omega", [&] {
    build_observation(model, sc.observation.omega, sc.observation.window,
                      sc.observation.smoothing);
  });

  const Block scb(source, doc["scale"], "scale");
  scb.allow({"sigma", "eps"});
  sc.scale.sigma = scb.real("sigma", 0.0);
  sc.scale.eps = scb.real("eps", 0.5);
  if (!(sc.scale.sigma >= 0.0) || !std::isfinite(sc.scale.sigma)) scb.error("sigma", "must be >= 0");
  if (!(sc.scale.eps > 0.0) || !std::isfinite(sc.scale.eps)) scb.error("eps", "must be > 0");

  const Block rb(source, doc["reconstruction"], "reconstruction");
  rb.allow({"threshold_n", "split_top", "ball_radius", "max_iters", "fix_tol", "gramian_nodes",
            "variant", "rank_tolerance"});
  auto& rc = sc.reconstruction;
  rc.sigma = sc.scale.sigma;
  if (rb.has("threshold_n") && rb.has("split_top"))
    rb.error("split_top", "give either threshold_n or split_top, not both");
  if (rb.has("split_top")) {
    const long long k = rb.integer("split_top", 1);
    if (k < 1 || k >= sc.model.n_modes) rb.error("split_top", "must lie in [1, n_modes - 1]");
    sc.split_top = static_cast<int>(k);
    // Midpoint between the last kept and the first split-off frequency.
    Eigen::VectorXd mu = model->mode_frequencies();
    std::sort(mu.data(), mu.data() + mu.size());
    const int cut = sc.model.n_modes - static_cast<int>(k);
    if (mu(cut) == mu(cut - 1)) rb.error("split_top", "falls inside a degenerate frequency");
    rc.threshold_n = 0.5 * (mu(cut - 1) + mu(cut));
  } else {
    rc.threshold_n = rb.real("threshold_n", 0.0);
  }
  if (!(rc.threshold_n >= 0.0)) rb.error("threshold_n", "must be >= 0");
  rc.ball_radius = rb.real("ball_radius", std::numeric_limits<double>::infinity());
  if (!(rc.ball_radius > 0.0)) rb.error("ball_radius", "must be > 0");
  rc.max_iters = static_cast<int>(rb.integer("max_iters", 50));
  if (rc.max_iters < 1) rb.error("max_iters", "must be >= 1");
  rc.fix_tol = rb.real("fix_tol", 1e-12);
  if (!(rc.fix_tol > 0.0)) rb.error("fix_tol", "must be > 0");
  rc.gramian_nodes = static_cast<int>(rb.integer("gramian_nodes", 0));
  if (rc.gramian_nodes < 0) rb.error("gramian_nodes", "must be >= 0");
  rc.variant = detail::parse_reconstruction_variant(
      rb.choice("variant", "plain", {"plain", "linearized"}));
  rc.rank_tolerance = rb.real("rank_tolerance", 1e-12);
  if (!(rc.rank_tolerance > 0.0)) rb.error("rank_tolerance", "must be > 0");

  const Block ib(source, doc["initial"], "initial");
  ib.allow({"profile", "amplitude", "decay", "mode"});
  sc.initial.profile = ib.choice("profile", "random", {"random", "mode"});
  sc.initial.amplitude = ib.real("amplitude", 0.1);
  if (!(sc.initial.amplitude >= 0.0) || !std::isfinite(sc.initial.amplitude))
    ib.error("amplitude", "must be finite and >= 0");
  sc.initial.decay = ib.real("decay", 1.0);
  sc.initial.mode = static_cast<int>(ib.integer("mode", 0));
  if (sc.initial.mode < 0 || sc.initial.mode >= sc.model.n_modes)
    ib.error("mode", "must index one of the n_modes modes");

  const Block runb(source, doc["run"], "run");
  runb.allow({"T_total", "dt", "seed", "output_dir", "integrator", "record_stride", "truth_refine",
              "noise", "low_ode", "low_ode_period"});
  auto& run = sc.run;
  run.T_total = runb.real("T_total", sc.observation.window);
  run.dt = runb.real("dt", 1e-3);
  {
    const long long seed = runb.integer("seed", 1);
    if (seed < 0) runb.error("seed", "must be >= 0");
    run.seed = static_cast<std::uint64_t>(seed);
  }
  run.output_dir = runb.text("output_dir", "out");
  run.integrator = runb.choice("integrator", "strang", {"strang", "yoshida4"}) == "yoshida4"
                       ? Integrator::yoshida4
                       : Integrator::strang;
  run.record_stride = static_cast<int>(runb.integer("record_stride", 1));
  run.truth_refine = static_cast<int>(runb.integer("truth_refine", 4));
  run.noise = runb.real("noise", 0.0);
  run.low_ode = runb.boolean("low_ode", false);
  run.low_ode_period = runb.real("low_ode_period", 0.0);
  detail::checked(runb, "dt", [&] { make_time_grid(run.T_total, run.dt); });
  if (run.record_stride < 1 || make_time_grid(run.T_total, run.dt).steps % run.record_stride != 0)
    runb.error("record_stride", "must be >= 1 and divide T_total / dt");
  if (run.truth_refine < 1) runb.error("truth_refine", "must be >= 1");
  if (!(run.noise >= 0.0)) runb.error("noise", "must be >= 0");
  if (!(run.low_ode_period >= 0.0)) runb.error("low_ode_period", "must be >= 0");

  const Block gb(source, doc["gramian"], "gramian");
  gb.allow({"subspace", "time_nodes"});
  if (gb.has("subspace") && gb.get("subspace").IsSequence()) {
    sc.gramian.subspace = "list";
    for (long long k : gb.integers("subspace", {})) {
      if (k < 0 || k >= sc.model.n_modes) gb.error("subspace", "mode index out of range");
      sc.gramian.modes.push_back(static_cast<int>(k));
    }
    detail::checked(gb, "subspace",
                    [&] { modalrecon::detail::check_mode_set(*model, sc.gramian.modes, "subspace"); });
  } else {
    sc.gramian.subspace = gb.choice("subspace", "auto", {"auto", "all", "high", "low"});
  }
  sc.gramian.time_nodes = static_cast<int>(gb.integer("time_nodes", 0));
  if (sc.gramian.time_nodes < 0) gb.error("time_nodes", "must be >= 0");

  const Block ab(source, doc["analyticity"], "analyticity");
  ab.allow({"K", "times"});
  sc.analyticity.K = static_cast<int>(ab.integer("K", 24));
  if (sc.analyticity.K < 8 || sc.analyticity.K > 40) ab.error("K", "must lie in [8, 40]");
  sc.analyticity.times = ab.reals("times", {0.0});
  for (double t : sc.analyticity.times)
    if (!(t >= 0.0) || !std::isfinite(t)) ab.error("times", "times must be finite and >= 0");

  const Block cb(source, doc["commutator"], "commutator");
  cb.allow({"s", "n_modes"});
  sc.commutator.s = cb.real("s", 0.5);
  if (!(sc.commutator.s > 0.0)) cb.error("s", "must be > 0");
  sc.commutator.n_modes.clear();
  for (long long k : cb.integers("n_modes", {16, 32, 64})) {
    if (k < 1) cb.error("n_modes", "entries must be >= 1");
    sc.commutator.n_modes.push_back(static_cast<int>(k));
  }

  const Block swb(source, doc["sweep"], "sweep");
  swb.allow({"subcommand", "parameters"});
  sc.sweep.subcommand = swb.choice("subcommand", "reconstruct",
                                   {"simulate", "gramian", "gcc", "reconstruct", "analyticity",
                                    "commutator"});
  if (swb.has("parameters")) {
    const YAML::Node ps = swb.get("parameters");
    if (!ps.IsMap()) swb.error("parameters", "expected a mapping from field path to value list");
    for (const auto& kv : ps) {
      const std::string path = kv.first.as<std::string>();
      if (!kv.second.IsSequence() || kv.second.size() == 0)
        detail::fail(source, kv.second, "sweep.parameters." + path, "expected a nonempty list");
      if (path.find('.') == std::string::npos || path.rfind("sweep", 0) == 0)
        detail::fail(source, kv.first, "sweep.parameters." + path,
                     "expected a block.field path outside the sweep block");
      SweepParameter p{path, {}};
      for (const auto& v : kv.second) p.values.push_back(YAML::Clone(v));
      sc.sweep.parameters.push_back(std::move(p));
    }
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  YAML::Node doc;
  try {
    doc = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ValidationError(path + ": cannot open scenario file");
  } catch (const YAML::ParserException& e) {
    throw ValidationError(path + ":" + std::to_string(e.mark.line + 1) + ": parse error: " + e.msg);
  }
  return parse_scenario(doc, path);
}

/// Copy of the document with `dotted.path` replaced by `value`.
inline YAML::Node with_override(const YAML::Node& doc, const std::string& path,
                                const YAML::Node& value) {
  YAML::Node out = YAML::Clone(doc);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  YAML::Node cur = out;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next || next.IsNull()) {
      cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[i]];
    }
    cur.reset(next);
  }
  cur[parts.back()] = YAML::Clone(value);
  return out;
}

}  // namespace modalrecon::io
