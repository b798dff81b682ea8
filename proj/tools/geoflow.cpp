// geoflow command line: `run` executes a config; the other subcommands
// run a single probe from inline flags.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoflow/experiment.hpp"

using namespace geoflow;
using namespace geoflow::experiment;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

/// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::string metric;
  std::vector<std::string> overrides;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* app, Common& c, bool needs_config) {
  auto* cfg = app->add_option("--config", c.config, "YAML experiment config")->check(CLI::ExistingFile);
  if (needs_config) cfg->required();
  else app->add_option("--metric", c.metric, "metric as k=v,... (kind, K0, profile, scale, band, phi, param, kappa, window=x0:x1:y0:y1)");
  app->add_option("--tol-override", c.overrides, "KEY=VAL for green, busemann, bvp, trace, strip, integ, T_max, seed");
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

std::map<std::string, std::string> split_fields(const std::string& s, const std::string& what) {
  std::map<std::string, std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError(what + ": expected key=value, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

/// Config from --config (or a default global block) with --metric and
/// --tol-override applied; experiments are left to the caller.
ExperimentConfig base_config(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
  } else if (c.metric.empty()) {
    throw ValidationError("--metric: required without --config");
  }
  if (!c.metric.empty()) std::tie(cfg.chart, cfg.metric_block) = metric_from_fields(split_fields(c.metric, "--metric"));
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ValidationError("--tol-override: expected KEY=VAL, got '" + o + "'");
    apply_override(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  return cfg;
}

Axis parse_axis_flag(const std::string& s, const std::string& flag) {
  Axis a;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d%c", &a.lo, &a.hi, &a.n, &tail) != 3 || a.n < 1 || a.hi < a.lo)
    throw ValidationError(flag + ": expected lo:hi:n, got '" + s + "'");
  return a;
}

ThetaSpec theta_flag(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") std::cout << text;
  else write_text(out, text);
}

/// Runs a one-experiment config without touching the output directory and
/// returns its table.
int run_single(ExperimentConfig cfg, ExperimentSpec spec, const Common& c, ReportFormat fmt) {
  spec.output = "probe.csv";
  cfg.experiments = {spec};
  RunOptions ro;
  ro.threads = c.threads;
  ro.write_outputs = false;
  ro.use_cache = false;
  const auto r = run_experiment(cfg, ro);
  const auto& e = r.experiments.front();
  if (!e.table) {
    std::cerr << "error: " << e.message << "\n";
    return kExitNumerical;
  }
  write_or_print(c.out, render(*e.table, fmt));
  if (!e.message.empty()) std::cerr << "warning: " << e.message << "\n";
  return r.exit_code();
}

ResultTable trace_table(const HorocycleTrace& tr) {
  ResultTable t;
  t.name = "trace";
  t.schema = {"s", "x", "y", "nx", "ny", "b_plus", "b_minus"};
  for (std::size_t i = 0; i < tr.s.size(); ++i) {
    t.add_row({tr.s[i], tr.points[i].x, tr.points[i].y, tr.normals[i].x, tr.normals[i].y, tr.b_plus[i],
               tr.b_minus[i]});
  }
  return t;
}

nlohmann::json vector_json(const UnitTangentVector& v) {
  return {v.base().x, v.base().y, v.dir().x, v.dir().y};
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geodesic flows on nonpositively curved surfaces: batch experiments and single probes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // run
  Common run_c;
  run_c.out = "out";
  bool no_cache = false;
  auto* run = app.add_subcommand("run", "execute every experiment of a config");
  add_common(run, run_c, true);
  run->add_option("--out", run_c.out, "output directory");
  run->add_flag("--no-cache", no_cache, "do not read or write the trajectory cache");

  // classify / green
  Common cls_c;
  std::string gx = "0:0:1", gy = "0:0:1", ga = "0:0:1";
  double threshold = 1e-4, lyap_T = 20.0, jitter = 0.0;
  auto* classify = app.add_subcommand("classify", "rank-one classification over a grid (CSV)");
  add_common(classify, cls_c, false);
  classify->add_option("--x", gx, "x axis lo:hi:n");
  classify->add_option("--y", gy, "y axis lo:hi:n");
  classify->add_option("--angle", ga, "frame angle axis lo:hi:n");
  classify->add_option("--threshold", threshold, "gap threshold for RankOne");
  classify->add_option("--lyap-T", lyap_T, "Lyapunov horizon");
  classify->add_option("--jitter", jitter, "uniform jitter amplitude (seeded)");
  classify->add_option("--out", cls_c.out, "output CSV (default stdout)");

  Common green_c;
  std::vector<double> green_theta;
  auto* green = app.add_subcommand("green", "Green limits at one vector (CSV row)");
  add_common(green, green_c, false);
  green->add_option("--theta", green_theta, "x,y,angle")->delimiter(',')->expected(3)->required();
  green->add_option("--out", green_c.out, "output CSV (default stdout)");

  // busemann / strip
  Common bus_c;
  std::vector<double> bus_theta;
  std::string sign = "plus";
  double bus_half = 1.0, bus_step = 0.05, bus_tol = -1.0;
  auto* busemann = app.add_subcommand("busemann", "trace the horocycle through theta (CSV)");
  add_common(busemann, bus_c, false);
  busemann->add_option("--theta", bus_theta, "x,y,angle")->delimiter(',')->expected(3)->required();
  busemann->add_option("--sign", sign, "plus (stable) or minus (unstable)")->check(CLI::IsMember({"plus", "minus"}));
  busemann->add_option("--halflength", bus_half, "arclength to each side");
  busemann->add_option("--step", bus_step, "trace step");
  busemann->add_option("--tol", bus_tol, "Busemann tolerance (overrides the config)");
  busemann->add_option("--out", bus_c.out, "output CSV (default stdout)");

  Common strip_c;
  std::vector<double> strip_theta;
  double strip_half = 3.0, strip_step = 0.05, strip_tol = -1.0;
  std::string strip_trace;
  auto* strip = app.add_subcommand("strip", "strip through theta (JSON record)");
  add_common(strip, strip_c, false);
  strip->add_option("--theta", strip_theta, "x,y,angle")->delimiter(',')->expected(3)->required();
  strip->add_option("--halflength", strip_half, "search halflength along the stable horocycle");
  strip->add_option("--step", strip_step, "trace step");
  strip->add_option("--tol", strip_tol, "strip tolerance (overrides the config)");
  strip->add_option("--trace", strip_trace, "also write the trace CSV here");
  strip->add_option("--out", strip_c.out, "output JSON (default stdout)");

  // entropy / expansivity
  Common ent_c;
  std::string ex = "0:0:1", ey = "-1:1:2001";
  std::vector<double> direction{1.0, 0.0}, ent_strip;
  std::vector<int> ns{2, 3, 4, 5, 6};
  double epsilon = 0.1;
  auto* entropy = app.add_subcommand("entropy", "separated-set entropy estimate (JSON)");
  add_common(entropy, ent_c, false);
  entropy->add_option("--x", ex, "window x axis lo:hi:n");
  entropy->add_option("--y", ey, "window y axis lo:hi:n");
  entropy->add_option("--direction", direction, "chart direction dx,dy")->delimiter(',')->expected(2);
  entropy->add_option("--strip", ent_strip, "use the strip through x,y,angle instead of a window")
      ->delimiter(',')
      ->expected(3);
  entropy->add_option("--epsilon", epsilon, "separation scale");
  entropy->add_option("--n", ns, "horizons")->delimiter(',');
  entropy->add_option("--out", ent_c.out, "output JSON (default stdout)");

  Common exp_c;
  std::vector<double> exp_theta, exp_eta;
  double delta = 0.2, exp_T = 20.0, bracket_tol = 1e-3;
  bool with_bracket = false;
  auto* expansivity = app.add_subcommand("expansivity", "expansivity probe for a pair (JSON)");
  add_common(expansivity, exp_c, false);
  expansivity->add_option("--theta", exp_theta, "x,y,angle")->delimiter(',')->expected(3)->required();
  expansivity->add_option("--eta", exp_eta, "x,y,angle")->delimiter(',')->expected(3)->required();
  expansivity->add_option("--delta", delta, "closeness scale");
  expansivity->add_option("--T", exp_T, "time horizon");
  expansivity->add_flag("--bracket", with_bracket, "also compute the bracket [theta, eta]");
  expansivity->add_option("--tol", bracket_tol, "bracket residual tolerance");
  expansivity->add_option("--out", exp_c.out, "output JSON (default stdout)");

  // report
  std::vector<std::string> inputs;
  std::string format = "csv", report_out = ".";
  auto* report = app.add_subcommand("report", "re-emit saved JSON tables");
  report->add_option("--in", inputs, "table JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "csv, json or plotdata")->check(CLI::IsMember({"csv", "json", "plotdata"}));
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) {
      auto cfg = base_config(run_c);
      validate(cfg);
      RunOptions ro;
      ro.out_dir = run_c.out;
      ro.threads = run_c.threads;
      ro.use_cache = !no_cache;
      const auto r = run_experiment(cfg, ro);
      for (const auto& e : r.experiments) {
        std::printf("%-18s %-24s %-9s rows=%zu%s%s\n", to_string(e.kind), e.output.c_str(), to_string(e.status),
                    e.table ? e.table->rows.size() : std::size_t{0}, e.message.empty() ? "" : "  ",
                    e.message.c_str());
      }
      std::printf("config %s, %zu experiments, cache %zu hits / %zu misses\n", r.config_hash.c_str(),
                  r.experiments.size(), r.cache_hits, r.cache_misses);
      return r.exit_code();
    }

    if (*classify || *green) {
      const Common& c = *classify ? cls_c : green_c;
      ExperimentSpec spec;
      if (*classify) {
        spec.kind = ExperimentKind::classify_grid;
        spec.grid = {parse_axis_flag(gx, "--x"), parse_axis_flag(gy, "--y"), parse_axis_flag(ga, "--angle")};
        spec.threshold = threshold;
        spec.lyap_T = lyap_T;
        spec.jitter = jitter;
      } else {
        spec.kind = ExperimentKind::green_sweep;
        const auto t = theta_flag(green_theta);
        spec.grid = {{t.x, t.x, 1}, {t.y, t.y, 1}, {t.angle, t.angle, 1}};
      }
      return run_single(base_config(c), spec, c, ReportFormat::csv);
    }

    if (*busemann) {
      auto cfg = base_config(bus_c);
      if (bus_tol > 0.0) cfg.global.tolerances.busemann = bus_tol;
      auto to = trace_options(cfg.global.tolerances);
      to.other_sign = true;
      const auto theta = theta_flag(bus_theta).make(cfg.chart);
      const auto tr = trace_horocycle(cfg.chart, theta, sign == "plus" ? BusemannSign::plus : BusemannSign::minus,
                                      bus_half, bus_step, to);
      write_or_print(bus_c.out, render_csv(trace_table(tr)));
      if (tr.truncated) std::cerr << "warning: trace truncated\n";
      return 0;
    }

    if (*strip) {
      auto cfg = base_config(strip_c);
      if (strip_tol > 0.0) cfg.global.tolerances.strip = strip_tol;
      const auto rec = detect_strip(cfg.chart, theta_flag(strip_theta).make(cfg.chart), strip_half,
                                    strip_options(cfg.global.tolerances, strip_step));
      nlohmann::json j{{"theta", vector_json(rec.theta)},
                       {"width", rec.width},
                       {"endpoint_lo", {rec.endpoint_lo.x, rec.endpoint_lo.y}},
                       {"endpoint_hi", {rec.endpoint_hi.x, rec.endpoint_hi.y}},
                       {"s_lo", rec.s_lo},
                       {"s_hi", rec.s_hi},
                       {"trivial", rec.trivial},
                       {"exceeded_window", rec.exceeded_window},
                       {"strip_tol", rec.strip_tol}};
      write_or_print(strip_c.out, j.dump(2) + "\n");
      if (!strip_trace.empty()) write_text(strip_trace, render_csv(trace_table(rec.trace)));
      return 0;
    }

    if (*entropy) {
      auto cfg = base_config(ent_c);
      ExperimentSpec spec;
      spec.kind = ExperimentKind::entropy_window;
      spec.epsilon = epsilon;
      spec.n = ns;
      if (!ent_strip.empty()) {
        spec.theta = theta_flag(ent_strip);
      } else {
        spec.window_x = parse_axis_flag(ex, "--x");
        spec.window_y = parse_axis_flag(ey, "--y");
        spec.direction = {direction[0], direction[1]};
      }
      spec.output = "probe.csv";
      cfg.experiments = {spec};
      RunOptions ro;
      ro.write_outputs = false;
      ro.use_cache = false;
      const auto r = run_experiment(cfg, ro);
      const auto& e = r.experiments.front();
      if (!e.table) {
        std::cerr << "error: " << e.message << "\n";
        return kExitNumerical;
      }
      auto j = e.table->summary;
      j.erase("rows_not_ok");
      write_or_print(ent_c.out, j.dump(2) + "\n");
      return 0;
    }

    if (*expansivity) {
      auto cfg = base_config(exp_c);
      const auto theta = theta_flag(exp_theta).make(cfg.chart);
      const auto eta = theta_flag(exp_eta).make(cfg.chart);
      ExpansivityOptions eo;
      eo.step = step_policy(cfg.global.tolerances);
      const auto v = expansivity_probe(cfg.chart, theta, eta, delta, exp_T, eo);
      nlohmann::json j{{"theta", vector_json(theta)},
                       {"eta", vector_json(eta)},
                       {"delta", v.delta},
                       {"T", v.T},
                       {"verdict", to_string(v.verdict)},
                       {"witness_t", finite_or_null(v.witness_t)},
                       {"rho", v.rho},
                       {"shift", v.shift},
                       {"shift_distance", finite_or_null(v.shift_distance)}};
      int rc = 0;
      if (with_bracket) {
        BracketOptions bo;
        bo.trace = trace_options(cfg.global.tolerances);
        const auto b = bracket(cfg.chart, theta, eta, bracket_tol, bo);
        j["bracket"] = {{"vector", vector_json(b.vector)}, {"offset", b.offset},        {"s", b.s},
                        {"residual_plus", b.residual_plus}, {"residual_minus", b.residual_minus},
                        {"residual_angle", b.residual_angle}};
        if (b.residual() > bracket_tol) rc = kExitNumerical;
      }
      write_or_print(exp_c.out, j.dump(2) + "\n");
      return rc;
    }

    if (*report) {
      std::vector<ResultTable> tables;
      for (const auto& in : inputs) {
        std::ifstream is(in);
        nlohmann::json j;
        try {
          is >> j;
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError(in + ": " + e.what());
        }
        tables.push_back(table_from_json(j));
      }
      for (const auto& f : emit_report(tables, parse_format(format), report_out)) std::cout << f.string() << "\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const PreconditionError& e) {
    // Inline probe inputs that violate an operation's precondition are bad input.
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
