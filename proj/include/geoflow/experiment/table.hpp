#pragma once

// Result tables and their CSV / JSON / plot-data renderings.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "geoflow/errors.hpp"

namespace geoflow::experiment {

inline constexpr const char* kVersion = "0.1.0";

using Cell = std::variant<double, std::int64_t, bool, std::string>;

struct ResultTable {
  /// Output stem relative to the output directory ("green/k1").
  std::string name;
  std::vector<std::string> schema;
  std::vector<std::vector<Cell>> rows;
  /// config_hash, version, experiment kind and index; wall_clock_s is
  /// added at run time and appears in JSON only.
  nlohmann::json provenance = nlohmann::json::object();
  /// Kind-specific aggregate results (entropy slope, ...).
  nlohmann::json summary = nlohmann::json::object();
  /// Columns written by the plotdata format; empty for tables without a
  /// natural series.
  std::string plot_x, plot_y;

  void add_row(std::vector<Cell> row) {
    if (row.size() != schema.size()) {
      throw ValidationError("row arity " + std::to_string(row.size()) + " differs from schema arity " +
                            std::to_string(schema.size()) + " in table " + name);
    }
    rows.push_back(std::move(row));
  }

  std::size_t column(const std::string& c) const {
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (schema[i] == c) return i;
    throw ValidationError("table " + name + " has no column '" + c + "'");
  }
};

enum class ReportFormat { csv, json, plotdata };

inline const char* extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return ".csv";
    case ReportFormat::json: return ".json";
    case ReportFormat::plotdata: return ".dat";
  }
  return "";
}

inline ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "plotdata") return ReportFormat::plotdata;
  throw ValidationError("format: unknown report format '" + s + "' (csv, json, plotdata)");
}

/// Shortest text that reads back to the same double; nan/inf spelled out.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string format_cell(const Cell& c) {
  struct {
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(bool v) const { return v ? "true" : "false"; }
    std::string operator()(const std::string& v) const { return v; }
  } visit;
  return std::visit(visit, c);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline std::string render_csv(const ResultTable& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.schema.size(); ++i) os << (i ? "," : "") << csv_field(t.schema[i]);
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_field(format_cell(row[i]));
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    // JSON has no nan/inf; keep them as strings so a round trip is lossless.
    if (!std::isfinite(*d)) return format_double(*d);
    return *d;
  }
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  if (const auto* b = std::get_if<bool>(&c)) return *b;
  return std::get<std::string>(c);
}

inline nlohmann::json to_json(const ResultTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    rows.push_back(std::move(r));
  }
  nlohmann::json j{{"name", t.name}, {"schema", t.schema}, {"rows", rows}, {"provenance", t.provenance}};
  if (!t.summary.empty()) j["summary"] = t.summary;
  if (!t.plot_x.empty()) j["plot"] = {t.plot_x, t.plot_y};
  return j;
}

inline ResultTable table_from_json(const nlohmann::json& j) {
  ResultTable t;
  try {
    t.name = j.at("name").get<std::string>();
    t.schema = j.at("schema").get<std::vector<std::string>>();
    t.provenance = j.value("provenance", nlohmann::json::object());
    t.summary = j.value("summary", nlohmann::json::object());
    if (j.contains("plot")) {
      t.plot_x = j["plot"].at(0).get<std::string>();
      t.plot_y = j["plot"].at(1).get<std::string>();
    }
    for (const auto& r : j.at("rows")) {
      std::vector<Cell> row;
      for (const auto& c : r) {
        if (c.is_boolean()) row.emplace_back(c.get<bool>());
        else if (c.is_number_integer()) row.emplace_back(c.get<std::int64_t>());
        else if (c.is_number()) row.emplace_back(c.get<double>());
        else if (c.is_string()) {
          const auto s = c.get<std::string>();
          if (s == "nan") row.emplace_back(std::nan(""));
          else if (s == "inf") row.emplace_back(HUGE_VAL);
          else if (s == "-inf") row.emplace_back(-HUGE_VAL);
          else row.emplace_back(s);
        } else {
          throw ValidationError("table json: unsupported cell type");
        }
      }
      t.add_row(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("table json: ") + e.what());
  }
  return t;
}

inline double numeric(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  if (const auto* b = std::get_if<bool>(&c)) return *b ? 1.0 : 0.0;
  return std::nan("");
}

/// "# x y" header then one "x y" line per row.
inline std::string render_plotdata(const ResultTable& t) {
  if (t.plot_x.empty()) throw ValidationError("table " + t.name + " has no plot series");
  const std::size_t ix = t.column(t.plot_x), iy = t.column(t.plot_y);
  std::ostringstream os;
  os << "# " << t.plot_x << ' ' << t.plot_y << '\n';
  for (const auto& row : t.rows)
    os << format_double(numeric(row[ix])) << ' ' << format_double(numeric(row[iy])) << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  std::error_code ec;
  if (file.has_parent_path()) {
    std::filesystem::create_directories(file.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + file.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + file.string() + " for writing");
  os << text;
  os.close();
  if (!os) throw IoError("write to " + file.string() + " failed");
}

inline std::string render(const ResultTable& t, ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return render_csv(t);
    case ReportFormat::json: return to_json(t).dump(2) + "\n";
    case ReportFormat::plotdata: return render_plotdata(t);
  }
  return {};
}

/// Writes `<dir>/<name><ext>` for each table. Tables without a plot series
/// are skipped for plotdata. Returns the files written.
inline std::vector<std::filesystem::path> emit_report(const std::vector<ResultTable>& tables, ReportFormat f,
                                                      const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& t : tables) {
    if (f == ReportFormat::plotdata && t.plot_x.empty()) continue;
    const auto file = dir / (t.name + extension(f));
    write_text(file, render(t, f));
    out.push_back(file);
  }
  return out;
}

}  // namespace geoflow::experiment
