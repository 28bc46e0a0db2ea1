#ifndef GRAINS_IO_HPP
#define GRAINS_IO_HPP

// File formats. Numbers are written with 9 significant digits; reading a file
// back and writing it again gives identical bytes.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "grains/anomaly.hpp"
#include "grains/boa.hpp"
#include "grains/bpes.hpp"
#include "grains/calibration.hpp"
#include "grains/granular_sim.hpp"
#include "grains/trajectory.hpp"

namespace grains::io {

using nlohmann::json;

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

/// The value a reader sees after x went through fmt().
inline double round9(double x) { return std::isfinite(x) ? std::stod(fmt(x)) : x; }

/// JSON number rounded to 9 digits; null for non-finite values.
inline json num(double x) { return std::isfinite(x) ? json(round9(x)) : json(nullptr); }

inline double num_or(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  require(used == s.size(), "csv: bad number '" + s + "'");
  return v;
}

inline void expect_header(std::istream& in, const std::string& header) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == header,
          "csv: expected header '" + header + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

inline ForceTrace read_trace_csv(std::istream& in) {
  detail::expect_header(in, "iteration,t_s,x_m,y_m,drag_N");
  ForceTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split(line);
    require(c.size() == 5, "trace csv: expected 5 columns");
    trace.samples.push_back({static_cast<std::size_t>(std::stoull(c[0])), detail::parse_double(c[1]),
                             {detail::parse_double(c[2]), detail::parse_double(c[3])},
                             detail::parse_double(c[4])});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

// Layout: a header row naming the grid geometry, one row with its values,
// then `rows` lines of `cols` values. The first data line is the row at min_y.

inline void write_grid_csv(std::ostream& out, const GridSpec& grid, const std::vector<double>& values) {
  require(values.size() == grid.cells(), "grid csv: value count does not match the grid");
  out << "origin_x,origin_y,resolution,cols,rows\n";
  out << fmt(grid.area.min_x) << ',' << fmt(grid.area.min_y) << ',' << fmt(grid.resolution) << ','
      << grid.cols() << ',' << grid.rows() << '\n';
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      if (c > 0) out << ',';
      out << fmt(values[r * grid.cols() + c]);
    }
    out << '\n';
  }
}

inline void write_mask_csv(std::ostream& out, const GridSpec& grid, const std::vector<std::uint8_t>& mask) {
  write_grid_csv(out, grid, std::vector<double>(mask.begin(), mask.end()));
}

struct GridData {
  GridSpec grid;
  std::vector<double> values;
};

inline GridData read_grid_csv(std::istream& in) {
  detail::expect_header(in, "origin_x,origin_y,resolution,cols,rows");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "grid csv: missing geometry row");
  const auto g = detail::split(line);
  require(g.size() == 5, "grid csv: geometry row needs 5 values");
  const double x0 = detail::parse_double(g[0]);
  const double y0 = detail::parse_double(g[1]);
  const double res = detail::parse_double(g[2]);
  const auto cols = static_cast<std::size_t>(std::stoull(g[3]));
  const auto rows = static_cast<std::size_t>(std::stoull(g[4]));
  GridData out;
  out.grid = {{x0, y0, x0 + static_cast<double>(cols) * res, y0 + static_cast<double>(rows) * res}, res};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split(line);
    require(cells.size() == cols, "grid csv: row has the wrong number of columns");
    for (const auto& c : cells) out.values.push_back(detail::parse_double(c));
  }
  require(out.values.size() == cols * rows, "grid csv: wrong number of rows");
  return out;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

inline json to_json(const CalibrationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"mv", num(row.mv)}, {"t_prior", row.t_prior}, {"rmse", num(row.rmse)},
                    {"max_abs_z", num(row.max_abs_z)}});
  }
  return {{"rows", rows},
          {"selected",
           {{"mv_star", num(r.selected.mv_star)}, {"t_star", r.selected.t_star}, {"zs_bar", num(r.selected.zs_bar)}}}};
}

inline std::vector<CalibrationRow> calibration_rows_from_json(const json& j) {
  const json& rows = j.is_object() ? j.at("rows") : j;
  require(rows.is_array() && !rows.empty(), "calibration rows: expected a non-empty array");
  std::vector<CalibrationRow> out;
  for (const auto& r : rows) {
    out.push_back({r.at("mv").get<double>(), r.at("t_prior").get<int>(), r.at("rmse").get<double>(),
                   r.at("max_abs_z").get<double>()});
  }
  return out;
}

inline CalibrationReport calibration_from_json(const json& j) {
  CalibrationReport r;
  r.rows = calibration_rows_from_json(j);
  const json& s = j.at("selected");
  r.selected = {s.at("mv_star").get<double>(), s.at("t_star").get<int>(), s.at("zs_bar").get<double>()};
  return r;
}

/// One column per MV; rows T, RMSE and max |z|, then the selected triple.
inline std::string render_table(const CalibrationReport& r, const std::string& medium = {}) {
  std::ostringstream out;
  out << std::left << std::setw(10) << (medium.empty() ? "MV" : medium);
  for (const auto& row : r.rows) out << std::right << std::setw(9) << fmt(row.mv);
  out << '\n' << std::left << std::setw(10) << "T";
  for (const auto& row : r.rows) out << std::right << std::setw(9) << row.t_prior;
  out << '\n' << std::left << std::setw(10) << "RMSE";
  char buf[32];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.3f", row.rmse);
    out << std::right << std::setw(9) << buf;
  }
  out << '\n' << std::left << std::setw(10) << "max|z|";
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.2f", row.max_abs_z);
    out << std::right << std::setw(9) << buf;
  }
  std::snprintf(buf, sizeof buf, "%.2f", r.selected.zs_bar);
  out << "\nselected: MV* = " << fmt(r.selected.mv_star) << ", T* = " << r.selected.t_star << ", ZS = " << buf
      << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Event logs
// ---------------------------------------------------------------------------

inline json to_json(const Verdict& v) {
  return {{"episode", v.episode}, {"iteration", v.iteration}, {"z", num(v.zscore)}, {"kind", to_string(v.kind)}};
}

inline Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.episode = j.at("episode").get<std::size_t>();
  v.iteration = j.at("iteration").get<std::size_t>();
  v.zscore = num_or(j.at("z"), std::numeric_limits<double>::quiet_NaN());
  const auto kind = j.at("kind").get<std::string>();
  require(kind == "normal" || kind == "jamming_warning", "verdict: unknown kind '" + kind + "'");
  v.kind = kind == "normal" ? VerdictKind::Normal : VerdictKind::JammingWarning;
  return v;
}

inline void write_verdicts_jsonl(std::ostream& out, const std::vector<Verdict>& verdicts) {
  for (const auto& v : verdicts) out << to_json(v).dump() << '\n';
}

inline json to_json(const ExplorationEvent& e) {
  json j{{"kind", to_string(e.kind)}, {"slide", e.slide}, {"x", num(e.pos.x)}, {"y", num(e.pos.y)}};
  if (e.kind == EventKind::JammingStop) j["z"] = num(e.z);
  if (e.kind == EventKind::PenetrationAttempt) j["success"] = e.success;
  if (e.kind == EventKind::Finished) j["reason"] = e.reason;
  return j;
}

inline ExplorationEvent event_from_json(const json& j) {
  static const EventKind kinds[] = {EventKind::SlideStarted,     EventKind::AbsenceReported,
                                    EventKind::PresenceReported, EventKind::JammingStop,
                                    EventKind::Contact,          EventKind::PenetrationAttempt,
                                    EventKind::GoalReassigned,   EventKind::Finished};
  ExplorationEvent e;
  const auto name = j.at("kind").get<std::string>();
  bool known = false;
  for (auto k : kinds) {
    if (name == to_string(k)) {
      e.kind = k;
      known = true;
    }
  }
  require(known, "exploration event: unknown kind '" + name + "'");
  e.slide = j.at("slide").get<std::size_t>();
  e.pos = {j.at("x").get<double>(), j.at("y").get<double>()};
  if (j.contains("z")) e.z = num_or(j["z"], 0.0);
  if (j.contains("success")) e.success = j["success"].get<bool>();
  if (j.contains("reason")) e.reason = j["reason"].get<std::string>();
  return e;
}

inline void write_events_jsonl(std::ostream& out, const ExplorationLog& log) {
  for (const auto& e : log.events) out << to_json(e).dump() << '\n';
}

inline std::vector<json> read_jsonl(std::istream& in) {
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

template <class Writer>
void write_file(const std::string& path, Writer&& writer) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
  writer(out);
  require(static_cast<bool>(out), "write to '" + path + "' failed");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

}  // namespace grains::io

#endif  // GRAINS_IO_HPP
