#pragma once

// Runs the experiments of a config and writes their tables.
//
// Every table is computed row by row; rows are independent and may run on
// several threads, but each row's inputs (including grid jitter) are fixed
// before any work starts and rows are stored by index, so the output does
// not depend on the thread count. A row that raises a library error is kept
// with NaN results and a status naming the error; an experiment that fails
// as a whole is recorded and the remaining experiments still run.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "geoflow/entropy.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/experiment/cache.hpp"
#include "geoflow/experiment/config.hpp"
#include "geoflow/experiment/table.hpp"
#include "geoflow/green.hpp"
#include "geoflow/horospheres.hpp"

namespace geoflow::experiment {

struct RunOptions {
  std::filesystem::path out_dir = ".";
  int threads = 1;
  bool use_cache = true;
  /// Defaults to TrajectoryCache::default_dir(out_dir).
  std::optional<std::filesystem::path> cache_dir;
  bool write_outputs = true;
};

enum class OutcomeStatus { ok, numerical, failed, io_error };

inline const char* to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::ok: return "ok";
    case OutcomeStatus::numerical: return "numerical";
    case OutcomeStatus::failed: return "failed";
    case OutcomeStatus::io_error: return "io_error";
  }
  return "?";
}

struct ExperimentOutcome {
  std::size_t index = 0;
  ExperimentKind kind = ExperimentKind::green_sweep;
  std::string output;
  /// numerical: some rows did not converge or raised; failed: no table.
  OutcomeStatus status = OutcomeStatus::ok;
  std::string message;
  std::size_t rows_not_ok = 0;
  std::optional<ResultTable> table;
  std::vector<std::filesystem::path> files;
};

struct RunReport {
  std::string config_hash;
  std::vector<ExperimentOutcome> experiments;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;

  std::vector<ResultTable> tables() const {
    std::vector<ResultTable> out;
    for (const auto& e : experiments)
      if (e.table) out.push_back(*e.table);
    return out;
  }

  /// 0 success, 3 numerical failure in any experiment, 4 I/O (takes precedence).
  int exit_code() const {
    bool io = false, num = false;
    for (const auto& e : experiments) {
      io = io || e.status == OutcomeStatus::io_error;
      num = num || e.status == OutcomeStatus::numerical || e.status == OutcomeStatus::failed;
    }
    return io ? 4 : num ? 3 : 0;
  }
};

// Library options derived from the global settings.

inline StepPolicy step_policy(const Tolerances& t) {
  StepPolicy p;
  p.local_tol = t.integ;
  return p;
}

inline GreenOptions green_options(const GlobalSettings& g) {
  GreenOptions o;
  o.tol = g.tolerances.green;
  o.T_max = g.T_max;
  o.step = step_policy(g.tolerances);
  return o;
}

inline BusemannOptions busemann_options(const Tolerances& t) {
  BusemannOptions b;
  b.tol = t.busemann;
  b.bvp.tol = t.bvp;
  b.step = step_policy(t);
  return b;
}

inline TraceOptions trace_options(const Tolerances& t) {
  TraceOptions o;
  o.trace_tol = t.trace;
  o.busemann = busemann_options(t);
  return o;
}

inline StripOptions strip_options(const Tolerances& t, double step) {
  StripOptions s;
  s.strip_tol = t.strip;
  s.step = step;
  s.trace = trace_options(t);
  return s;
}

namespace detail {

inline std::string error_tag(const std::exception& e) {
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence_error";
  if (dynamic_cast<const IntegrationError*>(&e)) return "integration_error";
  if (dynamic_cast<const NoIntersectionError*>(&e)) return "no_intersection";
  if (dynamic_cast<const PreconditionError*>(&e)) return "precondition_error";
  if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
  if (dynamic_cast<const ConjugatePointError*>(&e)) return "conjugate_point";
  if (dynamic_cast<const DiagnosticsError*>(&e)) return "diagnostics_error";
  return "error";
}

/// f(i) for i < n on up to `threads` threads. f must not throw.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Uniform doubles in [0, 1) from a fully specified engine, so jitter is
/// reproducible across standard libraries.
class Jitter {
 public:
  Jitter(std::uint64_t seed, std::size_t index) : rng_(seed * 0x9E3779B97F4A7C15ull + index + 1) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double offset(double amplitude) { return amplitude * (2.0 * uniform() - 1.0); }

 private:
  std::mt19937_64 rng_;
};

inline std::vector<ThetaSpec> grid_thetas(const GridSpec& g, double jitter, Jitter& rng) {
  std::vector<ThetaSpec> out;
  out.reserve(g.size());
  for (int i = 0; i < g.x.n; ++i) {
    for (int j = 0; j < g.y.n; ++j) {
      for (int k = 0; k < g.angle.n; ++k) {
        ThetaSpec t{g.x.at(i), g.y.at(j), g.angle.at(k)};
        if (jitter > 0.0) {
          t.x += rng.offset(jitter);
          t.y += rng.offset(jitter);
          t.angle += rng.offset(jitter);
        }
        out.push_back(t);
      }
    }
  }
  return out;
}

inline std::vector<Cell> vector_cells(const UnitTangentVector& v) {
  return {v.base().x, v.base().y, v.dir().x, v.dir().y};
}

inline void append(std::vector<Cell>& row, std::vector<Cell> more) {
  row.insert(row.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

/// Row with NaN results after the given prefix and the status last.
inline std::vector<Cell> failed_row(std::vector<Cell> prefix, std::size_t arity, const std::string& status) {
  while (prefix.size() + 1 < arity) prefix.emplace_back(std::nan(""));
  prefix.emplace_back(status);
  return prefix;
}

inline const std::vector<std::string> kVectorColumns{"x", "y", "vx", "vy"};

inline std::vector<std::string> columns(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

inline std::vector<std::string> prefixed(const std::string& p, const std::vector<std::string>& cols) {
  std::vector<std::string> out;
  for (const auto& c : cols) out.push_back(p + c);
  return out;
}

struct Context {
  const ExperimentConfig& cfg;
  const ExperimentSpec& spec;
  std::size_t index;
  int threads;
  TrajectoryCache* cache;

  const MetricChart& chart() const { return cfg.chart; }
  const Tolerances& tol() const { return cfg.global.tolerances; }

  StepPolicy step() const { return step_policy(tol()); }
  GreenOptions green() const { return green_options(cfg.global); }
  BusemannOptions busemann() const { return busemann_options(tol()); }
  TraceOptions trace() const { return trace_options(tol()); }
  StripOptions strip() const { return strip_options(tol(), spec.step); }

  GeodesicTrajectory orbit(const UnitTangentVector& theta) const {
    const TimeSpan span{-cfg.global.T_max, cfg.global.T_max};
    if (cache) return cache->get_or_compute(chart(), theta, span, step());
    return integrate_geodesic(chart(), theta, span, step());
  }
};

/// Fills `table` with one row per input; `row(i)` may throw library errors,
/// which become failed rows carrying `prefix(i)`.
template <class Row, class Prefix>
std::size_t fill_rows(ResultTable& table, std::size_t n, int threads, Row&& row, Prefix&& prefix) {
  std::vector<std::vector<Cell>> rows(n);
  parallel_for(n, threads, [&](std::size_t i) {
    try {
      rows[i] = row(i);
    } catch (const Error& e) {
      rows[i] = failed_row(prefix(i), table.schema.size(), error_tag(e));
    }
  });
  std::size_t not_ok = 0;
  const std::size_t status = table.schema.size() - 1;
  for (auto& r : rows) {
    if (std::get<std::string>(r[status]) != "ok") ++not_ok;
    table.add_row(std::move(r));
  }
  return not_ok;
}

inline std::size_t run_green_sweep(const Context& c, ResultTable& t) {
  Jitter rng(c.cfg.global.seed, c.index);
  const auto thetas = grid_thetas(c.spec.grid, c.spec.jitter, rng);
  t.schema = columns(kVectorColumns, {"u_s", "u_u", "gap", "converged", "T_used", "status"});
  t.plot_x = "y";
  t.plot_y = "gap";
  const auto opts = c.green();
  return fill_rows(
      t, thetas.size(), c.threads,
      [&](std::size_t i) {
        const auto theta = thetas[i].make(c.chart());
        const auto g = green_limit(c.orbit(theta), opts);
        auto row = vector_cells(theta);
        append(row, {g.u_s, g.u_u, g.gap, g.converged, g.T_used,
                     std::string(g.converged ? "ok" : "not_converged")});
        return row;
      },
      [&](std::size_t i) { return vector_cells(thetas[i].make(c.chart())); });
}

inline std::size_t run_classify_grid(const Context& c, ResultTable& t) {
  Jitter rng(c.cfg.global.seed, c.index);
  const auto thetas = grid_thetas(c.spec.grid, c.spec.jitter, rng);
  t.schema = columns(kVectorColumns, {"gap", "class", "lyap_T", "T", "status"});
  t.plot_x = "y";
  t.plot_y = "gap";
  const auto opts = c.green();
  const double T = c.spec.lyap_T;
  return fill_rows(
      t, thetas.size(), c.threads,
      [&](std::size_t i) {
        const auto theta = thetas[i].make(c.chart());
        const auto traj = c.orbit(theta);
        const auto g = green_limit(traj, opts);
        const auto cls = classify_rank_one(g, c.spec.threshold);
        const double lyap = g.converged ? lyapunov_exponent(traj, g, T, opts).value : std::nan("");
        auto row = vector_cells(theta);
        append(row, {g.gap, std::string(to_string(cls.kind)), lyap, T,
                     std::string(g.converged ? "ok" : "not_converged")});
        return row;
      },
      [&](std::size_t i) { return vector_cells(thetas[i].make(c.chart())); });
}

inline std::size_t run_lyapunov_sweep(const Context& c, ResultTable& t) {
  Jitter rng(c.cfg.global.seed, c.index);
  const auto thetas = grid_thetas(c.spec.grid, c.spec.jitter, rng);
  t.schema = columns(kVectorColumns, {"T", "lyapunov", "jacobi_value", "u_u0", "status"});
  t.plot_x = "y";
  t.plot_y = "lyapunov";
  const auto opts = c.green();
  return fill_rows(
      t, thetas.size(), c.threads,
      [&](std::size_t i) {
        const auto theta = thetas[i].make(c.chart());
        const auto traj = c.orbit(theta);
        const auto g = green_limit(traj, opts);
        auto row = vector_cells(theta);
        if (!g.converged) return failed_row(row, t.schema.size(), "not_converged");
        const auto L = lyapunov_exponent(traj, g, c.spec.T, opts);
        append(row, {L.T, L.value, L.jacobi_value, L.u_u0, std::string("ok")});
        return row;
      },
      [&](std::size_t i) { return vector_cells(thetas[i].make(c.chart())); });
}

inline std::size_t run_busemann_probe(const Context& c, ResultTable& t) {
  t.schema = {"px", "py", "value", "T_used", "error_estimate", "converged", "monotone", "grad_x", "grad_y",
              "status"};
  t.plot_x = "py";
  t.plot_y = "value";
  const auto theta = c.spec.theta->make(c.chart());
  const BusemannField field(c.chart(), theta, c.spec.sign, c.busemann());
  std::vector<ChartPoint> pts;
  for (int i = 0; i < c.spec.points.x.n; ++i)
    for (int j = 0; j < c.spec.points.y.n; ++j) pts.push_back({c.spec.points.x.at(i), c.spec.points.y.at(j)});
  t.summary["theta"] = {theta.base().x, theta.base().y, theta.dir().x, theta.dir().y};
  t.summary["sign"] = to_string(c.spec.sign);
  return fill_rows(
      t, pts.size(), c.threads,
      [&](std::size_t i) {
        const auto e = field.evaluate(pts[i]);
        return std::vector<Cell>{pts[i].x,  pts[i].y,   e.value,           e.T_used,
                                 e.error_estimate, e.converged, e.monotone, e.gradient.x,
                                 e.gradient.y,     std::string(e.converged ? "ok" : "not_converged")};
      },
      [&](std::size_t i) { return std::vector<Cell>{pts[i].x, pts[i].y}; });
}

inline std::size_t run_strip_scan(const Context& c, ResultTable& t) {
  Jitter rng(c.cfg.global.seed, c.index);
  const auto thetas = grid_thetas(c.spec.grid, c.spec.jitter, rng);
  t.schema = columns(kVectorColumns, {"width", "s_lo", "s_hi", "lo_x", "lo_y", "hi_x", "hi_y", "trivial",
                                      "exceeded_window", "status"});
  t.plot_x = "y";
  t.plot_y = "width";
  const auto opts = c.strip();
  return fill_rows(
      t, thetas.size(), c.threads,
      [&](std::size_t i) {
        const auto theta = thetas[i].make(c.chart());
        const auto r = detect_strip(c.chart(), theta, c.spec.halflength, opts);
        auto row = vector_cells(theta);
        append(row, {r.width, r.s_lo, r.s_hi, r.endpoint_lo.x, r.endpoint_lo.y, r.endpoint_hi.x,
                     r.endpoint_hi.y, r.trivial, r.exceeded_window, std::string("ok")});
        return row;
      },
      [&](std::size_t i) { return vector_cells(thetas[i].make(c.chart())); });
}

inline std::size_t run_entropy_window(const Context& c, ResultTable& t) {
  EntropyOptions eo;
  eo.step.local_tol = c.tol().integ;
  SeparatedSetResult r;
  if (c.spec.theta) {
    const auto rec = detect_strip(c.chart(), c.spec.theta->make(c.chart()), c.spec.halflength, c.strip());
    r = strip_entropy(c.chart(), rec, c.spec.epsilon, c.spec.n, c.spec.strip_samples, eo);
    t.summary["strip_width"] = rec.width;
    t.summary["bound"] = r.bound;
    t.summary["bound_holds"] = r.bound_holds;
    t.summary["delta2"] = r.delta2;
  } else {
    const auto& wx = c.spec.window_x;
    const auto& wy = c.spec.window_y;
    const auto window = EntropyWindow::grid(c.chart(), wx.lo, wx.hi, wy.lo, wy.hi, wx.n, wy.n,
                                            {c.spec.direction[0], c.spec.direction[1]});
    r = separated_set_entropy(c.chart(), window, c.spec.epsilon, c.spec.n, eo);
  }
  t.schema = {"n", "count", "log_count", "status"};
  t.plot_x = "n";
  t.plot_y = "log_count";
  for (std::size_t i = 0; i < r.n.size(); ++i) {
    t.add_row({static_cast<std::int64_t>(r.n[i]), static_cast<std::int64_t>(r.counts[i]),
               std::log(static_cast<double>(r.counts[i])), std::string("ok")});
  }
  t.summary["window"] = r.window;
  t.summary["epsilon"] = r.epsilon;
  t.summary["n"] = r.n;
  t.summary["counts"] = r.counts;
  t.summary["slope"] = r.slope;
  t.summary["dropped"] = r.dropped;
  return 0;
}

inline std::vector<std::pair<UnitTangentVector, UnitTangentVector>> make_pairs(const Context& c) {
  Jitter rng(c.cfg.global.seed, c.index);
  const auto thetas = grid_thetas(c.spec.grid, c.spec.jitter, rng);
  std::vector<std::pair<UnitTangentVector, UnitTangentVector>> out;
  const auto& d = c.spec.perturb;
  for (const auto& th : thetas) {
    const ThetaSpec eta{th.x + d[0], th.y + d[1], th.angle + d[2]};
    out.emplace_back(th.make(c.chart()), eta.make(c.chart()));
  }
  return out;
}

inline std::size_t run_expansivity_pairs(const Context& c, ResultTable& t) {
  const auto pairs = make_pairs(c);
  t.schema = columns(columns(prefixed("theta_", kVectorColumns), prefixed("eta_", kVectorColumns)),
                     {"delta", "T", "verdict", "witness_t", "shift", "shift_distance", "status"});
  ExpansivityOptions eo;
  eo.step = c.step();
  auto prefix = [&](std::size_t i) {
    auto row = vector_cells(pairs[i].first);
    append(row, vector_cells(pairs[i].second));
    return row;
  };
  return fill_rows(
      t, pairs.size(), c.threads,
      [&](std::size_t i) {
        const auto v = expansivity_probe(c.chart(), pairs[i].first, pairs[i].second, c.spec.delta, c.spec.T, eo);
        auto row = prefix(i);
        append(row, {v.delta, v.T, std::string(to_string(v.verdict)), v.witness_t, v.shift, v.shift_distance,
                     std::string("ok")});
        return row;
      },
      prefix);
}

inline std::size_t run_bracket_pairs(const Context& c, ResultTable& t) {
  const auto pairs = make_pairs(c);
  t.schema = columns(columns(prefixed("theta_", kVectorColumns), prefixed("eta_", kVectorColumns)),
                     {"x", "y", "vx", "vy", "offset", "s", "residual_plus", "residual_minus", "residual_angle",
                      "residual", "status"});
  BracketOptions bo;
  bo.halflength = c.spec.halflength;
  bo.step = c.spec.step;
  bo.trace = c.trace();
  auto prefix = [&](std::size_t i) {
    auto row = vector_cells(pairs[i].first);
    append(row, vector_cells(pairs[i].second));
    return row;
  };
  return fill_rows(
      t, pairs.size(), c.threads,
      [&](std::size_t i) {
        const auto b = bracket(c.chart(), pairs[i].first, pairs[i].second, c.spec.tol, bo);
        auto row = prefix(i);
        append(row, vector_cells(b.vector));
        const bool ok = b.residual() <= c.spec.tol;
        append(row, {b.offset, b.s, b.residual_plus, b.residual_minus, b.residual_angle, b.residual(),
                     std::string(ok ? "ok" : "residual_above_tol")});
        return row;
      },
      prefix);
}

inline std::size_t run_kind(const Context& c, ResultTable& t) {
  switch (c.spec.kind) {
    case ExperimentKind::green_sweep: return run_green_sweep(c, t);
    case ExperimentKind::classify_grid: return run_classify_grid(c, t);
    case ExperimentKind::lyapunov_sweep: return run_lyapunov_sweep(c, t);
    case ExperimentKind::busemann_probe: return run_busemann_probe(c, t);
    case ExperimentKind::strip_scan: return run_strip_scan(c, t);
    case ExperimentKind::entropy_window: return run_entropy_window(c, t);
    case ExperimentKind::expansivity_pairs: return run_expansivity_pairs(c, t);
    case ExperimentKind::bracket_pairs: return run_bracket_pairs(c, t);
  }
  throw ValidationError("unhandled experiment kind");
}

inline std::string table_name(const std::string& output) {
  return std::filesystem::path(output).lexically_normal().replace_extension().generic_string();
}

}  // namespace detail

/// Runs every experiment of a validated config. With `write_outputs`, each
/// experiment writes `<out>/<stem>.csv`, `<stem>.json` and, when the table
/// has a plot series, `<stem>.dat`, where stem is its output path without
/// extension.
inline RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  validate(cfg);
  RunReport report;
  report.config_hash = config_hash(cfg);
  std::unique_ptr<TrajectoryCache> cache;
  if (opts.use_cache)
    cache = std::make_unique<TrajectoryCache>(opts.cache_dir ? *opts.cache_dir
                                                             : TrajectoryCache::default_dir(opts.out_dir));

  for (std::size_t i = 0; i < cfg.experiments.size(); ++i) {
    const auto& spec = cfg.experiments[i];
    ExperimentOutcome out{.index = i, .kind = spec.kind, .output = spec.output};
    ResultTable table;
    table.name = detail::table_name(spec.output);
    table.provenance = {{"config_hash", report.config_hash},
                        {"version", kVersion},
                        {"experiment", i},
                        {"kind", to_string(spec.kind)},
                        {"metric", cfg.chart.describe()}};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const detail::Context ctx{cfg, spec, i, opts.threads, cache.get()};
      out.rows_not_ok = detail::run_kind(ctx, table);
      if (out.rows_not_ok > 0) {
        out.status = OutcomeStatus::numerical;
        out.message = std::to_string(out.rows_not_ok) + " of " + std::to_string(table.rows.size()) +
                      " rows not ok";
      }
    } catch (const IoError& e) {
      out.status = OutcomeStatus::io_error;
      out.message = e.what();
    } catch (const Error& e) {
      out.status = OutcomeStatus::failed;
      out.message = detail::error_tag(e) + ": " + e.what();
    }
    table.provenance["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.status == OutcomeStatus::ok || out.status == OutcomeStatus::numerical) {
      table.summary["rows_not_ok"] = out.rows_not_ok;
      if (opts.write_outputs) {
        try {
          for (auto f : {ReportFormat::csv, ReportFormat::json, ReportFormat::plotdata}) {
            const auto files = emit_report({table}, f, opts.out_dir);
            out.files.insert(out.files.end(), files.begin(), files.end());
          }
        } catch (const IoError& e) {
          out.status = OutcomeStatus::io_error;
          out.message = e.what();
        }
      }
      out.table = std::move(table);
    }
    report.experiments.push_back(std::move(out));
  }
  if (cache) {
    report.cache_hits = cache->hits();
    report.cache_misses = cache->misses();
  }
  return report;
}

}  // namespace geoflow::experiment
