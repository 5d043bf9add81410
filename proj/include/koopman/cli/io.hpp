#pragma once

// Output writers and the time-series CSV reader used by the command-line tool.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "koopman/error.hpp"
#include "koopman/pole_residue.hpp"
#include "koopman/signal.hpp"

#ifndef KOOPMAN_VERSION
#define KOOPMAN_VERSION "0.0.0"
#endif

namespace koopman::cli {

using Json = nlohmann::json;

enum class Format { csv, json };

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Key/value provenance attached to every output file, in insertion order.
struct Metadata {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value) {
    for (auto& e : entries) {
      if (e.first == key) {
        e.second = value;
        return;
      }
    }
    entries.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }

  Json to_json() const {
    Json j = Json::object();
    for (const auto& [k, v] : entries) j[k] = v;
    return j;
  }
};

inline Metadata base_metadata(const std::string& command, const Json& config) {
  Metadata m;
  m.set("tool", "koopman-lab");
  m.set("version", KOOPMAN_VERSION);
  m.set("command", command);
  m.set("config_hash", fnv1a_hex(config.dump()));
  std::string modules;
  for (const char* name : {"dynsys", "limit_cycle", "phase", "decompose", "resolvent", "modes", "cli"}) {
    modules += (modules.empty() ? "" : " ") + std::string(name) + "=" + KOOPMAN_VERSION;
  }
  m.set("modules", modules);
  m.set("eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                     std::to_string(EIGEN_MINOR_VERSION));
  m.set("json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                    std::to_string(NLOHMANN_JSON_VERSION_PATCH));
  return m;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::config, "cannot write output file '" + path.string() + "'");
  return out;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::config, "write failed for '" + path.string() + "'");
}

/// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.json`; returns the path written.
inline std::filesystem::path write_table(const std::filesystem::path& dir, const std::string& stem, const Table& t,
                                         const Metadata& meta, Format format) {
  if (format == Format::json) {
    Json j = Json::object();
    j["metadata"] = meta.to_json();
    j["columns"] = t.columns;
    Json rows = Json::array();
    for (const auto& r : t.rows) rows.push_back(r);
    j["rows"] = std::move(rows);
    const auto path = dir / (stem + ".json");
    write_json(path, j);
    return path;
  }
  const auto path = dir / (stem + ".csv");
  auto out = open_output(path);
  for (const auto& [k, v] : meta.entries) out << "# " << k << ": " << v << '\n';
  for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
  out << '\n';
  std::string line;
  for (const auto& r : t.rows) {
    line.clear();
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) line += ',';
      line += format_double(r[c]);
    }
    line += '\n';
    out << line;
  }
  if (!out) fail(ErrorKind::config, "write failed for '" + path.string() + "'");
  return path;
}

inline Json complex_json(Complex z) { return Json{{"im", z.imag()}, {"re", z.real()}}; }

inline Json cvec_json(const CVec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(complex_json(v[i]));
  return a;
}

inline Json pole_residue_json(const PoleResidueSet& prs) {
  Json entries = Json::array();
  for (const auto& e : prs.entries) {
    entries.push_back(Json{{"indices", e.indices}, {"pole", complex_json(e.pole)}, {"residue", cvec_json(e.residue)},
                           {"tag", to_string(e.tag)}});
  }
  return Json{{"entries", std::move(entries)}, {"roc_abscissa", prs.roc_abscissa}};
}

/// Uniformly sampled table read from CSV: header `t,y_1,...,y_m`, comment lines start with '#'.
struct TimeSeries {
  std::vector<std::string> columns;  // without the time column
  SampledSignal signal;
};

inline TimeSeries read_timeseries_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot open input file '" + path + "'");
  TimeSeries ts;
  std::vector<double> times;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  auto bad = [&](const std::string& msg) {
    fail(ErrorKind::config, path + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (!have_header) {
      if (fields.size() < 2) bad("header needs a time column and at least one signal column");
      ts.columns.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != ts.columns.size() + 1) {
      bad("expected " + std::to_string(ts.columns.size() + 1) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> nums;
    for (const auto& field : fields) {
      const char* b = field.data();
      const char* e = b + field.size();
      while (b < e && *b == ' ') ++b;
      while (e > b && *(e - 1) == ' ') --e;
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(b, e, x);
      if (ec != std::errc() || ptr != e || !std::isfinite(x)) bad("'" + field + "' is not a finite number");
      nums.push_back(x);
    }
    times.push_back(nums[0]);
    CVec v(static_cast<Eigen::Index>(nums.size() - 1));
    for (std::size_t c = 1; c < nums.size(); ++c) v[static_cast<Eigen::Index>(c - 1)] = nums[c];
    ts.signal.values.push_back(std::move(v));
  }
  if (!have_header) fail(ErrorKind::config, path + ": no header row");
  if (times.size() < 2) fail(ErrorKind::config, path + ": need at least two samples");
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0.0)) fail(ErrorKind::config, path + ": time column must increase");
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double step = times[k] - times[k - 1];
    if (std::abs(step - dt) > 1e-6 * dt) {
      fail(ErrorKind::config, path + ": time column is not uniformly sampled near t=" + format_double(times[k]));
    }
  }
  ts.signal.t0 = times.front();
  ts.signal.dt = dt;
  return ts;
}

}  // namespace koopman::cli
