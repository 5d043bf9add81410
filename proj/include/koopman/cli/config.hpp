#pragma once

// Experiment configuration: a single JSON document, validated strictly.
// Unknown keys and non-finite numbers are configuration errors.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "koopman/decompose.hpp"
#include "koopman/dynsys.hpp"
#include "koopman/error.hpp"
#include "koopman/limit_cycle.hpp"
#include "koopman/phase.hpp"

namespace koopman::cli {

using Json = nlohmann::json;

[[noreturn]] inline void config_error(const std::string& path, const std::string& msg) {
  fail(ErrorKind::config, path + ": " + msg);
}

namespace detail {

inline void allow_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) config_error(path, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) config_error(path + "." + item.key(), "unknown key");
  }
}

inline double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) config_error(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) config_error(path, "must be finite");
  return x;
}

inline std::optional<double> number(const Json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) return std::nullopt;
  return as_number(obj.at(key), path + "." + key);
}

inline double number(const Json& obj, const char* key, const std::string& path, double fallback) {
  return number(obj, key, path).value_or(fallback);
}

inline double positive(const Json& obj, const char* key, const std::string& path, double fallback) {
  const double x = number(obj, key, path, fallback);
  if (!(x > 0.0)) config_error(path + "." + key, "must be positive");
  return x;
}

inline int integer(const Json& obj, const char* key, const std::string& path, int fallback, int min_value) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) config_error(path + "." + key, "expected an integer");
  const auto x = v.get<long long>();
  if (x < min_value || x > 1'000'000'000) {
    config_error(path + "." + key, "must be an integer >= " + std::to_string(min_value));
  }
  return static_cast<int>(x);
}

inline Vec vector(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) config_error(path, "expected a non-empty array of numbers");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = as_number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

inline Mat matrix(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) config_error(path, "expected a non-empty array of rows");
  const std::size_t rows = v.size();
  Mat out;
  for (std::size_t r = 0; r < rows; ++r) {
    const Vec row = vector(v[r], path + "[" + std::to_string(r) + "]");
    if (r == 0) out.resize(static_cast<Eigen::Index>(rows), row.size());
    if (row.size() != out.cols()) config_error(path, "rows have different lengths");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

inline std::string string(const Json& obj, const char* key, const std::string& path, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) config_error(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

}  // namespace detail

/// One monomial coef * prod_i x_i^{powers_i} of a polynomial vector field.
struct Monomial {
  double coef = 0.0;
  std::vector<int> powers;
};

struct SystemConfig {
  std::string kind;  // linear | vdp | coupled_vdp | custom
  double eps = 0.3, kx = 1.0, ky = 3.0, kc = 0.5;
  Mat a;
  int dim = 0;
  std::vector<std::vector<Monomial>> polynomial;
};

struct ObservableConfig {
  std::string kind = "state";  // state | linear
  int index = 0;
  Vec c;
};

struct SGridConfig {
  std::vector<Complex> points;
  bool is_line = false;  // points lie on Re s = sigma, ordered in Im s
  double sigma = 0.0;
};

struct ResolventConfig {
  std::optional<SGridConfig> grid;
  std::optional<double> t_max;
  std::string model = "auto";  // auto | linear | limit_cycle | none
  int k_max = 2;
  int m_max = 7;
  double contour_radius = 0.15;
  int contour_points = 64;
};

struct DmdConfig {
  int delay = 16;
  double rank_tol = 1e-10;
  std::optional<double> t_start, t_end;
  int stride = 1;
};

struct PronyConfig {
  int order = 2;
  int component = 0;
  std::optional<double> t_start, t_end;
  int stride = 1;
  int sweep_min = 0, sweep_max = 0;  // sweep disabled when both are 0
};

struct ExperimentConfig {
  Json raw = Json::object();
  std::optional<SystemConfig> system;
  std::optional<Vec> x0;
  std::optional<double> horizon;
  std::optional<double> dt;
  std::optional<double> tol;
  std::vector<ObservableConfig> observables{ObservableConfig{}};
  LimitCycleOptions limit_cycle;
  PhaseOptions phase;
  DecayFitOptions decay_fit;
  int decay_component = 0;
  TorusOptions torus;
  ResolventConfig resolvent;
  DmdConfig dmd;
  PronyConfig prony;
  std::optional<std::string> input;
};

namespace detail {

inline SystemConfig parse_system(const Json& j) {
  const std::string path = "system";
  if (!j.is_object()) config_error(path, "expected an object");
  SystemConfig s;
  s.kind = string(j, "kind", path, "");
  if (s.kind == "linear") {
    allow_keys(j, path, {"kind", "A"});
    if (!j.contains("A")) config_error(path + ".A", "required for kind 'linear'");
    s.a = matrix(j.at("A"), path + ".A");
    if (s.a.rows() != s.a.cols()) config_error(path + ".A", "must be square");
    s.dim = static_cast<int>(s.a.rows());
  } else if (s.kind == "vdp") {
    allow_keys(j, path, {"kind", "eps"});
    s.eps = number(j, "eps", path, 0.3);
    s.dim = 2;
  } else if (s.kind == "coupled_vdp") {
    allow_keys(j, path, {"kind", "eps", "kx", "ky", "kc"});
    s.eps = number(j, "eps", path, 0.3);
    s.kx = number(j, "kx", path, 1.0);
    s.ky = number(j, "ky", path, 3.0);
    s.kc = number(j, "kc", path, 0.5);
    s.dim = 4;
  } else if (s.kind == "custom") {
    allow_keys(j, path, {"kind", "dim", "field"});
    s.dim = integer(j, "dim", path, 0, 1);
    if (s.dim == 0) config_error(path + ".dim", "required for kind 'custom'");
    if (!j.contains("field") || !j.at("field").is_array() || j.at("field").size() != static_cast<std::size_t>(s.dim)) {
      config_error(path + ".field", "expected one list of monomials per state component");
    }
    for (std::size_t i = 0; i < j.at("field").size(); ++i) {
      const Json& comp = j.at("field")[i];
      const std::string cpath = path + ".field[" + std::to_string(i) + "]";
      if (!comp.is_array()) config_error(cpath, "expected an array of monomials");
      std::vector<Monomial> terms;
      for (std::size_t q = 0; q < comp.size(); ++q) {
        const std::string tpath = cpath + "[" + std::to_string(q) + "]";
        allow_keys(comp[q], tpath, {"coef", "powers"});
        Monomial m;
        if (!comp[q].contains("coef")) config_error(tpath + ".coef", "required");
        m.coef = as_number(comp[q].at("coef"), tpath + ".coef");
        const Json& pw = comp[q].contains("powers") ? comp[q].at("powers") : Json();
        if (!pw.is_array() || pw.size() != static_cast<std::size_t>(s.dim)) {
          config_error(tpath + ".powers", "expected " + std::to_string(s.dim) + " non-negative integers");
        }
        for (std::size_t p = 0; p < pw.size(); ++p) {
          if (!pw[p].is_number_integer() || pw[p].get<long long>() < 0 || pw[p].get<long long>() > 16) {
            config_error(tpath + ".powers", "exponents must be integers in [0, 16]");
          }
          m.powers.push_back(pw[p].get<int>());
        }
        terms.push_back(std::move(m));
      }
      s.polynomial.push_back(std::move(terms));
    }
  } else {
    config_error(path + ".kind", "unknown system kind '" + s.kind + "' (expected linear, vdp, coupled_vdp, custom)");
  }
  return s;
}

inline std::vector<ObservableConfig> parse_observables(const Json& j) {
  const std::string path = "observables";
  if (!j.is_array() || j.empty()) config_error(path, "expected a non-empty array");
  std::vector<ObservableConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string opath = path + "[" + std::to_string(i) + "]";
    ObservableConfig o;
    o.kind = string(j[i], "kind", opath, "state");
    if (o.kind == "state") {
      allow_keys(j[i], opath, {"kind", "index"});
      o.index = integer(j[i], "index", opath, 0, 0);
    } else if (o.kind == "linear") {
      allow_keys(j[i], opath, {"kind", "c"});
      if (!j[i].contains("c")) config_error(opath + ".c", "required for kind 'linear'");
      o.c = vector(j[i].at("c"), opath + ".c");
    } else {
      config_error(opath + ".kind", "unknown observable kind '" + o.kind + "' (expected state, linear)");
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline SGridConfig parse_grid(const Json& j) {
  const std::string path = "resolvent.s_grid";
  SGridConfig g;
  if (!j.is_object()) config_error(path, "expected an object");
  if (j.contains("points")) {
    allow_keys(j, path, {"points"});
    const Json& pts = j.at("points");
    if (!pts.is_array() || pts.empty()) config_error(path + ".points", "expected a non-empty array of [re, im]");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec p = vector(pts[i], path + ".points[" + std::to_string(i) + "]");
      if (p.size() != 2) config_error(path + ".points[" + std::to_string(i) + "]", "expected [re, im]");
      g.points.emplace_back(p[0], p[1]);
    }
  } else if (j.contains("line")) {
    allow_keys(j, path, {"line"});
    const Json& l = j.at("line");
    const std::string lpath = path + ".line";
    allow_keys(l, lpath, {"sigma", "omega_min", "omega_max", "count"});
    for (const char* k : {"sigma", "omega_min", "omega_max"}) {
      if (!l.contains(k)) config_error(lpath + "." + k, "required");
    }
    g.sigma = number(l, "sigma", lpath, 0.0);
    const double lo = number(l, "omega_min", lpath, 0.0), hi = number(l, "omega_max", lpath, 0.0);
    const int count = integer(l, "count", lpath, 201, 2);
    if (!(hi > lo)) config_error(lpath, "omega_max must exceed omega_min");
    g.is_line = true;
    for (int k = 0; k < count; ++k) g.points.emplace_back(g.sigma, lo + (hi - lo) * k / (count - 1));
  } else if (j.contains("rect")) {
    allow_keys(j, path, {"rect"});
    const Json& r = j.at("rect");
    const std::string rpath = path + ".rect";
    allow_keys(r, rpath, {"re_min", "re_max", "re_count", "im_min", "im_max", "im_count"});
    for (const char* k : {"re_min", "re_max", "im_min", "im_max"}) {
      if (!r.contains(k)) config_error(rpath + "." + k, "required");
    }
    const double r0 = number(r, "re_min", rpath, 0.0), r1 = number(r, "re_max", rpath, 0.0);
    const double i0 = number(r, "im_min", rpath, 0.0), i1 = number(r, "im_max", rpath, 0.0);
    const int nr = integer(r, "re_count", rpath, 5, 1), ni = integer(r, "im_count", rpath, 10, 1);
    for (int a = 0; a < nr; ++a) {
      for (int b = 0; b < ni; ++b) {
        const double re = nr == 1 ? r0 : r0 + (r1 - r0) * a / (nr - 1);
        const double im = ni == 1 ? i0 : i0 + (i1 - i0) * b / (ni - 1);
        g.points.emplace_back(re, im);
      }
    }
  } else {
    config_error(path, "expected one of 'points', 'line', 'rect'");
  }
  return g;
}

inline void window(const Json& j, const std::string& path, std::optional<double>& start, std::optional<double>& end) {
  start = number(j, "t_start", path);
  end = number(j, "t_end", path);
  if (start && end && !(*end > *start)) config_error(path, "t_end must exceed t_start");
}

}  // namespace detail

/// Validates and converts a configuration document.
inline ExperimentConfig parse_config(const Json& j) {
  using namespace detail;
  const std::string root = "config";
  allow_keys(j, root,
             {"system", "x0", "horizon", "dt", "tol", "observables", "limit_cycle", "phase", "decay_fit", "torus",
              "resolvent", "dmd", "prony", "input"});
  ExperimentConfig c;
  c.raw = j;
  if (j.contains("system")) c.system = parse_system(j.at("system"));
  if (j.contains("x0")) c.x0 = vector(j.at("x0"), "x0");
  if (j.contains("horizon")) c.horizon = positive(j, "horizon", root, 1.0);
  if (j.contains("dt")) c.dt = positive(j, "dt", root, 1.0);
  if (j.contains("tol")) c.tol = positive(j, "tol", root, 1.0);
  c.observables = j.contains("observables") ? parse_observables(j.at("observables")) : std::vector<ObservableConfig>{{}};
  if (j.contains("input")) {
    if (!j.at("input").is_string()) config_error("input", "expected a path string");
    c.input = j.at("input").get<std::string>();
  }
  if (c.system && c.x0 && c.x0->size() != c.system->dim) {
    config_error("x0", "has " + std::to_string(c.x0->size()) + " entries, system dimension is " +
                           std::to_string(c.system->dim));
  }
  if (c.system) {
    for (const auto& o : c.observables) {
      if (o.kind == "state" && o.index >= c.system->dim) config_error("observables", "state index out of range");
      if (o.kind == "linear" && o.c.size() != c.system->dim) config_error("observables", "linear observable has wrong length");
    }
  }

  if (j.contains("limit_cycle")) {
    const Json& l = j.at("limit_cycle");
    allow_keys(l, "limit_cycle", {"t_settle", "tol", "samples", "trivial_tol", "closure_tol"});
    c.limit_cycle.t_settle = number(l, "t_settle", "limit_cycle", c.limit_cycle.t_settle);
    if (c.limit_cycle.t_settle < 0.0) config_error("limit_cycle.t_settle", "must be non-negative");
    c.limit_cycle.tol = positive(l, "tol", "limit_cycle", c.limit_cycle.tol);
    c.limit_cycle.samples = static_cast<std::size_t>(integer(l, "samples", "limit_cycle", 512, 1));
    c.limit_cycle.trivial_tol = positive(l, "trivial_tol", "limit_cycle", c.limit_cycle.trivial_tol);
    c.limit_cycle.closure_tol = positive(l, "closure_tol", "limit_cycle", c.limit_cycle.closure_tol);
  }
  if (j.contains("phase")) {
    const Json& p = j.at("phase");
    allow_keys(p, "phase", {"periods", "points_per_period", "tol", "method", "rel_tol"});
    c.phase.periods = positive(p, "periods", "phase", c.phase.periods);
    c.phase.points_per_period = static_cast<std::size_t>(integer(p, "points_per_period", "phase", 512, 8));
    c.phase.tol = positive(p, "tol", "phase", c.phase.tol);
    c.phase.rel_tol = positive(p, "rel_tol", "phase", c.phase.rel_tol);
    const std::string m = string(p, "method", "phase", "richardson");
    if (m == "plain") c.phase.method = AverageMethod::plain;
    else if (m == "richardson") c.phase.method = AverageMethod::richardson;
    else if (m == "bump") c.phase.method = AverageMethod::bump;
    else config_error("phase.method", "expected plain, richardson, or bump");
  }
  if (j.contains("decay_fit")) {
    const Json& d = j.at("decay_fit");
    allow_keys(d, "decay_fit", {"discard_fraction", "floor", "strobe_offset", "component"});
    c.decay_fit.discard_fraction = number(d, "discard_fraction", "decay_fit", c.decay_fit.discard_fraction);
    if (c.decay_fit.discard_fraction < 0.0 || c.decay_fit.discard_fraction >= 1.0) {
      config_error("decay_fit.discard_fraction", "must lie in [0, 1)");
    }
    c.decay_fit.floor = positive(d, "floor", "decay_fit", c.decay_fit.floor);
    c.decay_fit.strobe_offset = number(d, "strobe_offset", "decay_fit", 0.0);
    c.decay_component = integer(d, "component", "decay_fit", 0, 0);
  }
  if (j.contains("torus")) {
    const Json& t = j.at("torus");
    allow_keys(t, "torus", {"t_settle", "horizon", "dt", "tol", "frequencies", "harmonics", "phase_tol"});
    c.torus.t_settle = number(t, "t_settle", "torus", c.torus.t_settle);
    c.torus.horizon = positive(t, "horizon", "torus", c.torus.horizon);
    c.torus.dt = positive(t, "dt", "torus", c.torus.dt);
    c.torus.tol = positive(t, "tol", "torus", c.torus.tol);
    c.torus.frequencies = static_cast<std::size_t>(integer(t, "frequencies", "torus", 2, 1));
    c.torus.harmonics = integer(t, "harmonics", "torus", c.torus.harmonics, 0);
    c.torus.phase_tol = positive(t, "phase_tol", "torus", c.torus.phase_tol);
  }
  if (j.contains("resolvent")) {
    const Json& r = j.at("resolvent");
    allow_keys(r, "resolvent", {"s_grid", "t_max", "model", "k_max", "m_max", "contour_radius", "contour_points"});
    if (r.contains("s_grid")) c.resolvent.grid = parse_grid(r.at("s_grid"));
    if (r.contains("t_max")) c.resolvent.t_max = positive(r, "t_max", "resolvent", 1.0);
    c.resolvent.model = string(r, "model", "resolvent", "auto");
    if (!std::set<std::string>{"auto", "linear", "limit_cycle", "none"}.count(c.resolvent.model)) {
      config_error("resolvent.model", "expected auto, linear, limit_cycle, or none");
    }
    c.resolvent.k_max = integer(r, "k_max", "resolvent", 2, 0);
    c.resolvent.m_max = integer(r, "m_max", "resolvent", 7, 0);
    c.resolvent.contour_radius = positive(r, "contour_radius", "resolvent", 0.15);
    c.resolvent.contour_points = integer(r, "contour_points", "resolvent", 64, 4);
  }
  if (j.contains("dmd")) {
    const Json& d = j.at("dmd");
    allow_keys(d, "dmd", {"delay", "rank_tol", "t_start", "t_end", "stride"});
    c.dmd.delay = integer(d, "delay", "dmd", 16, 1);
    c.dmd.rank_tol = positive(d, "rank_tol", "dmd", 1e-10);
    c.dmd.stride = integer(d, "stride", "dmd", 1, 1);
    window(d, "dmd", c.dmd.t_start, c.dmd.t_end);
  }
  if (j.contains("prony")) {
    const Json& p = j.at("prony");
    allow_keys(p, "prony", {"order", "component", "t_start", "t_end", "stride", "sweep_min", "sweep_max"});
    c.prony.order = integer(p, "order", "prony", 2, 1);
    c.prony.component = integer(p, "component", "prony", 0, 0);
    c.prony.stride = integer(p, "stride", "prony", 1, 1);
    c.prony.sweep_min = integer(p, "sweep_min", "prony", 0, 0);
    c.prony.sweep_max = integer(p, "sweep_max", "prony", 0, 0);
    if (c.prony.sweep_max < c.prony.sweep_min) config_error("prony.sweep_max", "must be >= sweep_min");
    window(p, "prony", c.prony.t_start, c.prony.t_end);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::config, "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// x' = p(x) with finite-difference Jacobian.
inline DynSystem polynomial_system(int dim, const std::vector<std::vector<Monomial>>& field) {
  auto f = [field](const Vec& x) -> Vec {
    Vec out = Vec::Zero(x.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
      for (const auto& m : field[i]) {
        double term = m.coef;
        for (std::size_t k = 0; k < m.powers.size(); ++k) {
          for (int p = 0; p < m.powers[k]; ++p) term *= x[static_cast<Eigen::Index>(k)];
        }
        out[static_cast<Eigen::Index>(i)] += term;
      }
    }
    return out;
  };
  return with_finite_difference_jacobian(dim, f, "custom");
}

inline DynSystem make_system(const SystemConfig& s) {
  if (s.kind == "linear") return builtin_linear(s.a);
  if (s.kind == "vdp") return builtin_vdp(s.eps);
  if (s.kind == "coupled_vdp") return builtin_coupled_vdp(s.eps, s.kx, s.ky, s.kc);
  return polynomial_system(s.dim, s.polynomial);
}

inline Observable make_observable(const std::vector<ObservableConfig>& list, int n) {
  std::vector<Observable> parts;
  for (const auto& o : list) {
    if (o.kind == "state") {
      if (o.index >= n) config_error("observables", "state index out of range");
      parts.push_back(state_component(o.index));
    } else {
      if (o.c.size() != n) config_error("observables", "linear observable has wrong length");
      parts.push_back(linear_observable(o.c));
    }
  }
  if (parts.size() == 1) return parts.front();
  std::string label;
  for (const auto& p : parts) label += (label.empty() ? "" : ",") + p.label;
  const int m = static_cast<int>(parts.size());
  return Observable{m,
                    [parts](const Vec& x) {
                      CVec v(static_cast<Eigen::Index>(parts.size()));
                      for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parts[i](x)[0];
                      return v;
                    },
                    label};
}

}  // namespace koopman::cli
