#pragma once

// Experiment configuration: YAML documents of the form
//
//   metric:      {kind, params: {...}, kappa, window: [xmin, xmax, ymin, ymax]}
//   global:      {T_max, seed, tolerances: {green, busemann, bvp, trace, strip, integ}}
//   experiments: [{kind, output, ...kind-specific keys}]
//
// Parsing is strict: unknown keys, wrong types and out-of-range values raise
// ValidationError with the dotted path of the offending key.

#include <yaml-cpp/yaml.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "geoflow/errors.hpp"
#include "geoflow/geodesic.hpp"
#include "geoflow/horospheres.hpp"
#include "geoflow/metric.hpp"

namespace geoflow::experiment {

enum class ExperimentKind {
  green_sweep,
  classify_grid,
  busemann_probe,
  strip_scan,
  entropy_window,
  expansivity_pairs,
  bracket_pairs,
  lyapunov_sweep,
};

inline const std::vector<std::pair<const char*, ExperimentKind>>& experiment_kinds() {
  static const std::vector<std::pair<const char*, ExperimentKind>> kinds{
      {"green_sweep", ExperimentKind::green_sweep},
      {"classify_grid", ExperimentKind::classify_grid},
      {"busemann_probe", ExperimentKind::busemann_probe},
      {"strip_scan", ExperimentKind::strip_scan},
      {"entropy_window", ExperimentKind::entropy_window},
      {"expansivity_pairs", ExperimentKind::expansivity_pairs},
      {"bracket_pairs", ExperimentKind::bracket_pairs},
      {"lyapunov_sweep", ExperimentKind::lyapunov_sweep},
  };
  return kinds;
}

inline const char* to_string(ExperimentKind k) {
  for (const auto& [name, kind] : experiment_kinds())
    if (kind == k) return name;
  return "?";
}

/// n equally spaced values on [lo, hi]; n = 1 gives lo.
struct Axis {
  double lo = 0.0;
  double hi = 0.0;
  int n = 1;

  double at(int i) const { return n == 1 ? lo : lo + (hi - lo) * i / (n - 1); }
};

/// Unit tangent vectors on an x-y-angle product grid. Angles are measured
/// in the orthonormal frame (e1 along +x), in radians.
struct GridSpec {
  Axis x, y, angle;
  std::size_t size() const {
    return static_cast<std::size_t>(x.n) * static_cast<std::size_t>(y.n) *
           static_cast<std::size_t>(angle.n);
  }
};

/// (x, y, frame angle).
struct ThetaSpec {
  double x = 0.0, y = 0.0, angle = 0.0;
  UnitTangentVector make(const MetricChart& chart) const {
    return UnitTangentVector::from_angle(chart, {x, y}, angle);
  }
};

struct Tolerances {
  double green = 1e-8;
  double busemann = 1e-5;
  double bvp = 1e-9;
  double trace = 1e-6;
  double strip = 1e-3;
  double integ = 1e-10;
};

struct GlobalSettings {
  double T_max = 40.0;
  std::uint64_t seed = 0;
  Tolerances tolerances;
};

/// Keys not used by a kind keep their defaults and are rejected by the parser.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::green_sweep;
  std::string output;
  GridSpec grid;
  double jitter = 0.0;
  // classify_grid
  double threshold = 1e-4;
  double lyap_T = 20.0;
  // lyapunov_sweep, expansivity_pairs
  double T = 20.0;
  // busemann_probe, entropy_window (strip mode)
  std::optional<ThetaSpec> theta;
  BusemannSign sign = BusemannSign::plus;
  GridSpec points;
  // strip_scan, bracket_pairs, entropy_window (strip mode)
  double halflength = 3.0;
  double step = 0.05;
  // entropy_window
  Axis window_x, window_y;
  std::array<double, 2> direction{1.0, 0.0};
  double epsilon = 0.1;
  std::vector<int> n;
  int strip_samples = 401;
  // expansivity_pairs, bracket_pairs
  std::array<double, 3> perturb{0.0, 0.05, 0.0};
  double delta = 0.2;
  double tol = 1e-3;
};

struct ExperimentConfig {
  /// Canonical metric block; `chart` is built from it.
  nlohmann::json metric_block;
  MetricChart chart = MetricChart::constant_curvature(-1.0, {});
  GlobalSettings global;
  std::vector<ExperimentSpec> experiments;
};

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

[[noreturn]] inline void invalid(const std::string& path, const std::string& what) {
  throw ValidationError(path + ": " + what);
}

inline void check_keys(const YAML::Node& node, const std::string& path,
                       const std::set<std::string>& allowed) {
  if (!node.IsMap()) invalid(path.empty() ? "<root>" : path, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) invalid(join_path(path, key), "unknown key");
  }
}

inline double as_double(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) invalid(path, "expected a number");
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    invalid(path, "expected a number, got '" + n.Scalar() + "'");
  }
}

inline long long as_int(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) invalid(path, "expected an integer");
  try {
    return n.as<long long>();
  } catch (const YAML::Exception&) {
    invalid(path, "expected an integer, got '" + n.Scalar() + "'");
  }
}

inline std::string as_string(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) invalid(path, "expected a string");
  return n.Scalar();
}

inline double positive(const YAML::Node& n, const std::string& path) {
  const double v = as_double(n, path);
  if (!(v > 0.0) || !std::isfinite(v)) invalid(path, "must be a positive number");
  return v;
}

inline std::vector<double> number_list(const YAML::Node& n, const std::string& path, std::size_t len) {
  if (!n.IsSequence() || n.size() != len)
    invalid(path, "expected a list of " + std::to_string(len) + " numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < len; ++i)
    out.push_back(as_double(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Axis parse_axis(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence() || n.size() != 3) invalid(path, "expected [lo, hi, n]");
  Axis a{as_double(n[0], path + "[0]"), as_double(n[1], path + "[1]"),
         static_cast<int>(as_int(n[2], path + "[2]"))};
  if (a.n < 1) invalid(path + "[2]", "point count must be >= 1");
  if (a.n > 1 && !(a.hi >= a.lo)) invalid(path, "needs lo <= hi");
  return a;
}

inline GridSpec parse_grid(const YAML::Node& n, const std::string& path, bool with_angle) {
  check_keys(n, path, with_angle ? std::set<std::string>{"x", "y", "angle"} : std::set<std::string>{"x", "y"});
  GridSpec g;
  if (!n["x"]) invalid(path + ".x", "missing");
  if (!n["y"]) invalid(path + ".y", "missing");
  g.x = parse_axis(n["x"], path + ".x");
  g.y = parse_axis(n["y"], path + ".y");
  if (with_angle && n["angle"]) g.angle = parse_axis(n["angle"], path + ".angle");
  return g;
}

inline ThetaSpec parse_theta(const YAML::Node& n, const std::string& path) {
  const auto v = number_list(n, path, 3);
  return {v[0], v[1], v[2]};
}

inline WarpedProfile parse_profile(const std::string& s, const std::string& path) {
  for (auto p : {WarpedProfile::cosh, WarpedProfile::exp_decay, WarpedProfile::flat_band, WarpedProfile::flat})
    if (s == to_string(p)) return p;
  invalid(path, "unknown profile '" + s + "' (cosh, exp, flat_band, flat)");
}

inline ConformalPotential parse_potential(const std::string& s, const std::string& path) {
  for (auto p : {ConformalPotential::zero, ConformalPotential::constant, ConformalPotential::quadratic})
    if (s == to_string(p)) return p;
  invalid(path, "unknown potential '" + s + "' (zero, constant, quadratic)");
}

}  // namespace detail

/// Builds the chart of a metric block and its canonical JSON form.
inline std::pair<MetricChart, nlohmann::json> parse_metric(const YAML::Node& node,
                                                           const std::string& path = "metric") {
  using namespace detail;
  check_keys(node, path, {"kind", "params", "kappa", "window"});
  if (!node["kind"]) invalid(path + ".kind", "missing");
  const std::string kind = as_string(node["kind"], path + ".kind");
  const YAML::Node params = node["params"] ? node["params"] : YAML::Node(YAML::NodeType::Map);
  const std::string ppath = path + ".params";

  Window win;
  if (node["window"]) {
    const auto w = number_list(node["window"], path + ".window", 4);
    win = {w[0], w[1], w[2], w[3]};
    if (!(win.xmax > win.xmin) || !(win.ymax > win.ymin))
      invalid(path + ".window", "needs xmin < xmax and ymin < ymax");
  }
  double kappa = -1.0;
  if (node["kappa"]) {
    kappa = as_double(node["kappa"], path + ".kappa");
    if (!(kappa >= 0.0)) invalid(path + ".kappa", "must be nonnegative");
  }

  nlohmann::json canon{{"kind", kind}, {"window", {win.xmin, win.xmax, win.ymin, win.ymax}}};
  try {
    if (kind == "constant_curvature") {
      check_keys(params, ppath, {"K0"});
      if (!params["K0"]) invalid(ppath + ".K0", "missing");
      const double K0 = as_double(params["K0"], ppath + ".K0");
      if (node["kappa"]) invalid(path + ".kappa", "is implied by K0 for constant_curvature");
      canon["params"] = {{"K0", K0}};
      auto chart = MetricChart::constant_curvature(K0, win);
      canon["kappa"] = chart.kappa();
      return {chart, canon};
    }
    if (kind == "warped") {
      check_keys(params, ppath, {"profile", "scale", "band"});
      if (!params["profile"]) invalid(ppath + ".profile", "missing");
      const auto profile = parse_profile(as_string(params["profile"], ppath + ".profile"), ppath + ".profile");
      const double scale = params["scale"] ? positive(params["scale"], ppath + ".scale") : 1.0;
      const double band = params["band"] ? as_double(params["band"], ppath + ".band") : 0.0;
      if (!(band >= 0.0)) invalid(ppath + ".band", "must be nonnegative");
      auto chart = MetricChart::warped(profile, scale, band, win, kappa);
      canon["params"] = {{"profile", to_string(profile)}, {"scale", scale}, {"band", band}};
      canon["kappa"] = chart.kappa();
      return {chart, canon};
    }
    if (kind == "conformal") {
      check_keys(params, ppath, {"phi", "param"});
      if (!params["phi"]) invalid(ppath + ".phi", "missing");
      const auto pot = parse_potential(as_string(params["phi"], ppath + ".phi"), ppath + ".phi");
      const double param = params["param"] ? as_double(params["param"], ppath + ".param") : 0.0;
      auto chart = MetricChart::conformal(pot, param, win, kappa);
      canon["params"] = {{"phi", to_string(pot)}, {"param", param}};
      canon["kappa"] = chart.kappa();
      return {chart, canon};
    }
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    invalid(path, msg);
  }
  invalid(path + ".kind", "unknown metric kind '" + kind + "' (constant_curvature, warped, conformal)");
}

/// Metric from flat `key=value` fields (CLI form). Recognized keys: kind,
/// K0, profile, scale, band, phi, param, kappa, window=xmin:xmax:ymin:ymax.
inline std::pair<MetricChart, nlohmann::json> metric_from_fields(
    const std::map<std::string, std::string>& fields) {
  YAML::Node node(YAML::NodeType::Map);
  YAML::Node params(YAML::NodeType::Map);
  for (const auto& [k, v] : fields) {
    if (k == "kind" || k == "kappa") {
      node[k] = v;
    } else if (k == "window") {
      YAML::Node w(YAML::NodeType::Sequence);
      std::size_t pos = 0;
      while (true) {
        const auto c = v.find(':', pos);
        w.push_back(v.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
        if (c == std::string::npos) break;
        pos = c + 1;
      }
      node["window"] = w;
    } else {
      params[k] = v;
    }
  }
  if (params.size() > 0) node["params"] = params;
  return parse_metric(node);
}

namespace detail {

inline const std::set<std::string>& allowed_keys(ExperimentKind k) {
  static const std::map<ExperimentKind, std::set<std::string>> table{
      {ExperimentKind::green_sweep, {"grid", "jitter"}},
      {ExperimentKind::classify_grid, {"grid", "jitter", "threshold", "lyap_T"}},
      {ExperimentKind::lyapunov_sweep, {"grid", "jitter", "T"}},
      {ExperimentKind::busemann_probe, {"theta", "sign", "points"}},
      {ExperimentKind::strip_scan, {"grid", "jitter", "halflength", "step"}},
      {ExperimentKind::entropy_window,
       {"window", "direction", "epsilon", "n", "strip", "halflength", "step", "samples"}},
      {ExperimentKind::expansivity_pairs, {"grid", "jitter", "perturb", "delta", "T"}},
      {ExperimentKind::bracket_pairs, {"grid", "jitter", "perturb", "tol", "halflength", "step"}},
  };
  return table.at(k);
}

inline ExperimentSpec parse_experiment(const YAML::Node& node, const std::string& path,
                                       const GlobalSettings& global) {
  if (!node.IsMap()) invalid(path, "expected a mapping");
  if (!node["kind"]) invalid(path + ".kind", "missing");
  const std::string kind_name = as_string(node["kind"], path + ".kind");
  ExperimentSpec e;
  bool found = false;
  for (const auto& [name, kind] : experiment_kinds()) {
    if (kind_name == name) {
      e.kind = kind;
      found = true;
    }
  }
  if (!found) invalid(path + ".kind", "unknown experiment kind '" + kind_name + "'");

  std::set<std::string> allowed = allowed_keys(e.kind);
  allowed.insert({"kind", "output"});
  check_keys(node, path, allowed);

  if (!node["output"]) invalid(path + ".output", "missing");
  e.output = as_string(node["output"], path + ".output");
  if (e.output.empty()) invalid(path + ".output", "must be nonempty");
  const std::filesystem::path out(e.output);
  if (out.is_absolute() || out.lexically_normal().string().rfind("..", 0) == 0)
    invalid(path + ".output", "must be a relative path inside the output directory");

  auto need = [&](const char* key) {
    if (!node[key]) invalid(path + "." + key, "missing");
    return node[key];
  };
  auto opt_positive = [&](const char* key, double& dst) {
    if (node[key]) dst = positive(node[key], path + "." + key);
  };

  if (allowed.count("grid")) e.grid = parse_grid(need("grid"), path + ".grid", true);
  if (node["jitter"]) {
    e.jitter = as_double(node["jitter"], path + ".jitter");
    if (!(e.jitter >= 0.0)) invalid(path + ".jitter", "must be nonnegative");
  }
  opt_positive("threshold", e.threshold);
  opt_positive("lyap_T", e.lyap_T);
  opt_positive("T", e.T);
  opt_positive("halflength", e.halflength);
  opt_positive("step", e.step);
  opt_positive("delta", e.delta);
  opt_positive("tol", e.tol);

  switch (e.kind) {
    case ExperimentKind::classify_grid:
      if (e.lyap_T > global.T_max) invalid(path + ".lyap_T", "must not exceed global.T_max");
      break;
    case ExperimentKind::lyapunov_sweep:
      if (e.T > global.T_max) invalid(path + ".T", "must not exceed global.T_max");
      break;
    case ExperimentKind::busemann_probe: {
      e.theta = parse_theta(need("theta"), path + ".theta");
      if (node["sign"]) {
        const auto s = as_string(node["sign"], path + ".sign");
        if (s == "+" || s == "plus") e.sign = BusemannSign::plus;
        else if (s == "-" || s == "minus") e.sign = BusemannSign::minus;
        else invalid(path + ".sign", "expected plus or minus");
      }
      e.points = parse_grid(need("points"), path + ".points", false);
      break;
    }
    case ExperimentKind::entropy_window: {
      opt_positive("epsilon", e.epsilon);
      const auto ns = need("n");
      if (!ns.IsSequence() || ns.size() < 2) invalid(path + ".n", "expected a list of at least two integers");
      for (std::size_t i = 0; i < ns.size(); ++i) {
        const auto v = as_int(ns[i], path + ".n[" + std::to_string(i) + "]");
        if (v < 1) invalid(path + ".n[" + std::to_string(i) + "]", "must be >= 1");
        if (!e.n.empty() && v <= e.n.back()) invalid(path + ".n", "must be strictly increasing");
        e.n.push_back(static_cast<int>(v));
      }
      const bool has_window = static_cast<bool>(node["window"]);
      const bool has_strip = static_cast<bool>(node["strip"]);
      if (has_window == has_strip) invalid(path, "entropy_window needs exactly one of 'window' or 'strip'");
      if (has_window) {
        const auto w = parse_grid(node["window"], path + ".window", false);
        e.window_x = w.x;
        e.window_y = w.y;
        if (node["direction"]) {
          const auto d = number_list(node["direction"], path + ".direction", 2);
          e.direction = {d[0], d[1]};
          if (d[0] == 0.0 && d[1] == 0.0) invalid(path + ".direction", "must be nonzero");
        }
      } else {
        if (node["direction"]) invalid(path + ".direction", "only valid with 'window'");
        e.theta = parse_theta(node["strip"], path + ".strip");
      }
      if (node["samples"]) {
        if (!has_strip) invalid(path + ".samples", "only valid with 'strip'");
        e.strip_samples = static_cast<int>(as_int(node["samples"], path + ".samples"));
        if (e.strip_samples < 3) invalid(path + ".samples", "must be >= 3");
      }
      break;
    }
    case ExperimentKind::expansivity_pairs:
    case ExperimentKind::bracket_pairs:
      if (node["perturb"]) {
        const auto p = number_list(node["perturb"], path + ".perturb", 3);
        e.perturb = {p[0], p[1], p[2]};
      }
      break;
    default:
      break;
  }
  return e;
}

inline Tolerances parse_tolerances(const YAML::Node& n, const std::string& path) {
  check_keys(n, path, {"green", "busemann", "bvp", "trace", "strip", "integ"});
  Tolerances t;
  if (n["green"]) t.green = positive(n["green"], path + ".green");
  if (n["busemann"]) t.busemann = positive(n["busemann"], path + ".busemann");
  if (n["bvp"]) t.bvp = positive(n["bvp"], path + ".bvp");
  if (n["trace"]) t.trace = positive(n["trace"], path + ".trace");
  if (n["strip"]) t.strip = positive(n["strip"], path + ".strip");
  if (n["integ"]) t.integ = positive(n["integ"], path + ".integ");
  return t;
}

}  // namespace detail

/// Sets one global setting: a tolerance name, T_max or seed.
inline void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string path = "--tol-override " + key;
  YAML::Node v(value);
  auto& t = cfg.global.tolerances;
  if (key == "seed") {
    const auto s = detail::as_int(v, path);
    if (s < 0) detail::invalid(path, "must be nonnegative");
    cfg.global.seed = static_cast<std::uint64_t>(s);
    return;
  }
  const double x = detail::positive(v, path);
  if (key == "green") t.green = x;
  else if (key == "busemann") t.busemann = x;
  else if (key == "bvp") t.bvp = x;
  else if (key == "trace") t.trace = x;
  else if (key == "strip") t.strip = x;
  else if (key == "integ") t.integ = x;
  else if (key == "T_max") cfg.global.T_max = x;
  else detail::invalid(path, "unknown setting (green, busemann, bvp, trace, strip, integ, T_max, seed)");
}

/// Cross-experiment checks; run again after overrides.
inline void validate(const ExperimentConfig& cfg) {
  std::set<std::string> stems;
  for (std::size_t i = 0; i < cfg.experiments.size(); ++i) {
    const auto& e = cfg.experiments[i];
    const std::string path = "experiments[" + std::to_string(i) + "].output";
    // Sidecar files share the stem, so stems must differ.
    const auto stem = std::filesystem::path(e.output).lexically_normal().replace_extension().string();
    if (!stems.insert(stem).second) detail::invalid(path, "duplicate output '" + e.output + "'");
    if (e.kind == ExperimentKind::classify_grid && e.lyap_T > cfg.global.T_max)
      detail::invalid("experiments[" + std::to_string(i) + "].lyap_T", "must not exceed global.T_max");
    if (e.kind == ExperimentKind::lyapunov_sweep && e.T > cfg.global.T_max)
      detail::invalid("experiments[" + std::to_string(i) + "].T", "must not exceed global.T_max");
  }
}

inline ExperimentConfig parse_config(const YAML::Node& root) {
  using namespace detail;
  if (!root || root.IsNull()) invalid("<root>", "empty document");
  check_keys(root, "", {"metric", "global", "experiments"});
  ExperimentConfig cfg;
  if (!root["metric"]) invalid("metric", "missing");
  std::tie(cfg.chart, cfg.metric_block) = parse_metric(root["metric"]);

  if (root["global"]) {
    const auto g = root["global"];
    check_keys(g, "global", {"T_max", "seed", "tolerances"});
    if (g["T_max"]) cfg.global.T_max = positive(g["T_max"], "global.T_max");
    if (g["seed"]) {
      const auto s = as_int(g["seed"], "global.seed");
      if (s < 0) invalid("global.seed", "must be nonnegative");
      cfg.global.seed = static_cast<std::uint64_t>(s);
    }
    if (g["tolerances"]) cfg.global.tolerances = parse_tolerances(g["tolerances"], "global.tolerances");
  }

  if (!root["experiments"]) invalid("experiments", "missing");
  const auto ex = root["experiments"];
  if (!ex.IsSequence() && !ex.IsNull()) invalid("experiments", "expected a list");
  if (ex.IsSequence()) {
    for (std::size_t i = 0; i < ex.size(); ++i)
      cfg.experiments.push_back(parse_experiment(ex[i], "experiments[" + std::to_string(i) + "]", cfg.global));
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  try {
    return parse_config(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: YAML syntax error: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read config file " + file.string());
  } catch (const YAML::Exception& e) {
    throw ValidationError(file.string() + ": YAML syntax error: " + e.what());
  }
  return parse_config(root);
}

// ---------------------------------------------------------------------------
// Canonical form and hashing.

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json to_json(const Axis& a) { return {a.lo, a.hi, a.n}; }

inline nlohmann::json to_json(const GridSpec& g) {
  return {{"x", to_json(g.x)}, {"y", to_json(g.y)}, {"angle", to_json(g.angle)}};
}

/// Only the keys a kind accepts are emitted, so unused defaults never
/// influence the hash.
inline nlohmann::json to_json(const ExperimentSpec& e) {
  nlohmann::json j{{"kind", to_string(e.kind)}, {"output", e.output}};
  const auto& keys = detail::allowed_keys(e.kind);
  auto has = [&](const char* k) { return keys.count(k) > 0; };
  if (has("grid")) j["grid"] = to_json(e.grid);
  if (has("jitter")) j["jitter"] = e.jitter;
  if (has("threshold")) j["threshold"] = e.threshold;
  if (has("lyap_T")) j["lyap_T"] = e.lyap_T;
  if (has("T")) j["T"] = e.T;
  if (has("halflength")) j["halflength"] = e.halflength;
  if (has("step")) j["step"] = e.step;
  if (has("delta")) j["delta"] = e.delta;
  if (has("tol")) j["tol"] = e.tol;
  if (has("perturb")) j["perturb"] = e.perturb;
  if (e.kind == ExperimentKind::busemann_probe) {
    j["theta"] = {e.theta->x, e.theta->y, e.theta->angle};
    j["sign"] = e.sign == BusemannSign::plus ? "plus" : "minus";
    j["points"] = {{"x", to_json(e.points.x)}, {"y", to_json(e.points.y)}};
  }
  if (e.kind == ExperimentKind::entropy_window) {
    j["epsilon"] = e.epsilon;
    j["n"] = e.n;
    if (e.theta) {
      j["strip"] = {e.theta->x, e.theta->y, e.theta->angle};
      j["samples"] = e.strip_samples;
    } else {
      j["window"] = {{"x", to_json(e.window_x)}, {"y", to_json(e.window_y)}};
      j["direction"] = e.direction;
    }
  }
  return j;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.global.tolerances;
  nlohmann::json j;
  j["metric"] = cfg.metric_block;
  j["global"] = {{"T_max", cfg.global.T_max},
                 {"seed", cfg.global.seed},
                 {"tolerances",
                  {{"green", t.green},
                   {"busemann", t.busemann},
                   {"bvp", t.bvp},
                   {"trace", t.trace},
                   {"strip", t.strip},
                   {"integ", t.integ}}}};
  j["experiments"] = nlohmann::json::array();
  for (const auto& e : cfg.experiments) j["experiments"].push_back(to_json(e));
  return j;
}

/// FNV-1a of the canonical JSON (sorted keys, shortest round-trip numbers).
inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a(to_json(cfg).dump())); }

}  // namespace geoflow::experiment
