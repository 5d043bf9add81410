#pragma once

// Subcommands of koopman-lab. Each one reads an ExperimentConfig, writes its
// artifacts under the output directory, and reports failures as koopman::Error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "koopman/cli/config.hpp"
#include "koopman/cli/io.hpp"
#include "koopman/decompose.hpp"
#include "koopman/limit_cycle.hpp"
#include "koopman/modes.hpp"
#include "koopman/phase.hpp"
#include "koopman/resolvent.hpp"

namespace koopman::cli {

struct RunContext {
  std::string command;
  ExperimentConfig config;
  std::filesystem::path out_dir = ".";
  Format format = Format::csv;
  std::optional<std::string> input;  // overrides config.input
  std::ostream* log = &std::cout;
};

/// Process exit code for each failure category.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument: return 2;
    case ErrorKind::numeric:
    case ErrorKind::non_convergence:
    case ErrorKind::aliasing: return 3;
    case ErrorKind::not_found: return 4;
    case ErrorKind::degenerate_fit: return 5;
    case ErrorKind::roc_violation: return 6;
  }
  return 3;
}

namespace detail {

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (const double x : xs) v[i++] = x;
  return v;
}

inline SystemConfig require_system(const ExperimentConfig& c) {
  if (!c.system) config_error("system", "required for this command");
  return *c.system;
}

inline SystemConfig system_or(const ExperimentConfig& c, const std::string& kind) {
  if (c.system) return *c.system;
  SystemConfig s;
  s.kind = kind;
  s.dim = kind == "vdp" ? 2 : 4;
  return s;
}

/// x0 from the config, else the customary start for the built-in oscillators.
inline Vec initial_state(const ExperimentConfig& c, const SystemConfig& s) {
  if (c.x0) {
    if (c.x0->size() != s.dim) config_error("x0", "length does not match the system dimension");
    return *c.x0;
  }
  if (s.kind == "vdp") return make_vec({3.0, 0.0});
  if (s.kind == "coupled_vdp") return make_vec({3.0, 3.0, 3.0, 3.0});
  config_error("x0", "required for system kind '" + s.kind + "'");
}

inline Metadata metadata(const RunContext& ctx, const DynSystem& sys, double tol, double dt) {
  Metadata m = base_metadata(ctx.command, ctx.config.raw);
  m.set("system", sys.name());
  m.set("jacobian", to_string(sys.jacobian_source()));
  m.set("tol", tol);
  m.set("dt", dt);
  return m;
}

inline Table trajectory_table(const Trajectory& tr) {
  Table t;
  t.columns.push_back("t");
  for (int i = 0; i < tr.dim(); ++i) t.columns.push_back("x_" + std::to_string(i + 1));
  t.rows.reserve(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    std::vector<double> row{tr.time(k)};
    for (int i = 0; i < tr.dim(); ++i) row.push_back(tr.state(k)[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Json complex_list(const std::vector<Complex>& zs) {
  Json a = Json::array();
  for (const Complex z : zs) a.push_back(complex_json(z));
  return a;
}

inline double sup_norm(const Trajectory& tr, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t k = from; k < to; ++k) s = std::max(s, tr.state(k).cwiseAbs().maxCoeff());
  return s;
}

inline void write_decomposition(const RunContext& ctx, const Decomposition& d, const Metadata& meta) {
  for (const auto& [stem, tr] : {std::pair<const char*, const Trajectory*>{"original", &d.original},
                                 {"stationary", &d.stationary},
                                 {"residual", &d.residual}}) {
    write_table(ctx.out_dir, stem, trajectory_table(*tr), meta, ctx.format);
  }
}

inline LimitCycleInfo find_cycle(const DynSystem& sys, const Vec& x0, const LimitCycleOptions& opt) {
  try {
    return analyze_limit_cycle(sys, x0, opt);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::not_found) fail(ErrorKind::not_found, std::string("no limit cycle found: ") + e.what());
    throw;
  }
}

/// Coefficient vector c with y = c . x for each observable, when every observable is linear.
inline std::vector<Vec> linear_rows(const std::vector<ObservableConfig>& obs, int n) {
  std::vector<Vec> rows;
  for (const auto& o : obs) {
    if (o.kind == "linear") {
      rows.push_back(o.c);
    } else {
      Vec e = Vec::Zero(n);
      e[o.index] = 1.0;
      rows.push_back(e);
    }
  }
  return rows;
}

/// Input signal for dmd/prony: a CSV file, or a simulated output when no file is given.
inline std::pair<SampledSignal, std::vector<std::string>> load_signal(const RunContext& ctx, Metadata& meta) {
  const auto& c = ctx.config;
  const std::optional<std::string> path = ctx.input ? ctx.input : c.input;
  if (path) {
    TimeSeries ts = read_timeseries_csv(*path);
    meta.set("input", *path);
    std::ifstream in(*path, std::ios::binary);
    meta.set("input_hash", fnv1a_hex(std::string(std::istreambuf_iterator<char>(in), {})));
    return {std::move(ts.signal), std::move(ts.columns)};
  }
  const SystemConfig s = require_system(c);
  const DynSystem sys = make_system(s);
  const Vec x0 = initial_state(c, s);
  if (!c.horizon) config_error("horizon", "required when no input file is given");
  if (!c.dt) config_error("dt", "required when no input file is given");
  const double tol = c.tol.value_or(1e-12);
  const Trajectory tr = integrate(sys, x0, *c.horizon, *c.dt, tol);
  const Observable obs = make_observable(c.observables, s.dim);
  meta.set("system", sys.name());
  meta.set("jacobian", to_string(sys.jacobian_source()));
  meta.set("tol", tol);
  std::vector<std::string> cols;
  for (int i = 0; i < obs.m; ++i) cols.push_back("y_" + std::to_string(i + 1));
  SampledSignal sig = sample_observable(tr, obs);
  sig.t0 = tr.t0();
  return {std::move(sig), std::move(cols)};
}

/// Restricts a signal to [t_start, t_end] and keeps every stride-th sample.
inline SampledSignal window_signal(const SampledSignal& s, std::optional<double> t_start, std::optional<double> t_end,
                                   int stride) {
  SampledSignal out;
  const double lo = t_start.value_or(s.t0);
  const double hi = t_end.value_or(s.time(s.size() - 1));
  std::size_t first = 0;
  while (first < s.size() && s.time(first) < lo - 1e-9 * s.dt) ++first;
  for (std::size_t k = first; k < s.size() && s.time(k) <= hi + 1e-9 * s.dt; k += static_cast<std::size_t>(stride)) {
    out.values.push_back(s.values[k]);
  }
  if (out.values.size() < 2) fail(ErrorKind::degenerate_fit, "selected window holds fewer than two samples");
  out.t0 = s.time(first);
  out.dt = s.dt * stride;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void run_simulate(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  const SystemConfig s = require_system(c);
  if (!c.x0) config_error("x0", "required for simulate");
  if (!c.horizon) config_error("horizon", "required for simulate");
  if (!c.dt) config_error("dt", "required for simulate");
  const DynSystem sys = make_system(s);
  const double tol = c.tol.value_or(1e-9);
  const Trajectory tr = integrate(sys, initial_state(c, s), *c.horizon, *c.dt, tol);
  Metadata meta = metadata(ctx, sys, tol, *c.dt);
  meta.set("horizon", *c.horizon);
  const auto path = write_table(ctx.out_dir, "trajectory", trajectory_table(tr), meta, ctx.format);
  *ctx.log << "simulate: " << tr.size() << " samples -> " << path.string() << '\n';
}

inline void run_floquet(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  const SystemConfig s = require_system(c);
  const DynSystem sys = make_system(s);
  const Vec x0 = initial_state(c, s);
  const LimitCycleInfo info = find_cycle(sys, x0, c.limit_cycle);
  const PeriodEstimate p = find_period(sys, info.anchor, info.period, c.limit_cycle);

  Json mono = Json::array();
  for (Eigen::Index r = 0; r < info.monodromy.rows(); ++r) mono.push_back(vec_json(info.monodromy.row(r).transpose()));
  Json j = Json::object();
  j["metadata"] = metadata(ctx, sys, c.limit_cycle.tol, 0.0).to_json();
  j["period"] = info.period;
  j["omega"] = info.omega;
  j["fft_omega"] = p.fft_omega;
  j["fft_bin_width"] = p.fft_bin_width;
  j["fft_consistent"] = p.fft_consistent;
  j["anchor"] = vec_json(info.anchor);
  j["trivial_multiplier"] = complex_json(info.trivial_multiplier);
  j["multipliers"] = complex_list(info.multipliers);
  j["exponents"] = complex_list(info.exponents);
  j["nu"] = info.dominant_exponent().real();
  j["monodromy"] = std::move(mono);
  write_json(ctx.out_dir / "floquet.json", j);
  *ctx.log << "floquet: Omega = " << format_double(info.omega) << ", nu = " << format_double(j["nu"].get<double>())
           << '\n';
}

inline void run_fig1(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  const SystemConfig s = system_or(c, "vdp");
  const DynSystem sys = make_system(s);
  const Vec x0 = initial_state(c, s);
  const double horizon = c.horizon.value_or(100.0);
  const double dt = c.dt.value_or(0.01);
  const double tol = c.tol.value_or(1e-12);
  if (c.decay_component >= s.dim) config_error("decay_fit.component", "out of range");

  const LimitCycleInfo cycle = find_cycle(sys, x0, c.limit_cycle);
  DecomposeOptions dopt;
  dopt.tol = tol;
  dopt.phase = c.phase;
  dopt.phase_observable = make_observable(c.observables, s.dim);
  const Decomposition dec = decompose(sys, x0, cycle, horizon, dt, dopt);

  Metadata meta = metadata(ctx, sys, tol, dt);
  meta.set("horizon", horizon);
  meta.set("period", cycle.period);
  write_decomposition(ctx, dec, meta);

  std::optional<DecayFit> fit;
  std::optional<Error> fit_error;
  try {
    fit = decay_rate(dec, c.decay_component, cycle.period, c.decay_fit);
  } catch (const Error& e) {
    fit_error = e;
  }

  Table strobes;
  strobes.columns = {"t", "abs_residual", "log_abs_residual", "used"};
  for (std::size_t k = 0;; ++k) {
    const double t = dec.original.t0() + c.decay_fit.strobe_offset + static_cast<double>(k) * cycle.period;
    if (t > dec.original.t_end() + 1e-12) break;
    const double a = std::abs(dec.residual_at(t)[c.decay_component]);
    bool used = false;
    if (fit && k < fit->strobe_used.size()) used = fit->strobe_used[k];
    strobes.rows.push_back({t, a, a > 0.0 ? std::log(a) : -std::numeric_limits<double>::infinity(), used ? 1.0 : 0.0});
  }
  write_table(ctx.out_dir, "strobe_log", strobes, meta, ctx.format);

  const double r0 = dec.residual.state(0).norm();
  double r_sup = 0.0;
  for (std::size_t k = 0; k < dec.residual.size(); ++k) r_sup = std::max(r_sup, dec.residual.state(k).norm());

  Json j = Json::object();
  j["metadata"] = meta.to_json();
  j["omega"] = cycle.omega;
  j["period"] = cycle.period;
  j["nu_floquet"] = cycle.dominant_exponent().real();
  j["phase"] = dec.phases.empty() ? 0.0 : dec.phases.front();
  j["matched_state"] = vec_json(dec.matched_state);
  j["residual_initial_norm"] = r0;
  j["residual_sup_norm"] = r_sup;
  if (fit) {
    j["status"] = "ok";
    j["nu_hat"] = fit->rate;
    j["r2"] = fit->r2;
    j["intercept"] = fit->intercept;
    j["window_start"] = fit->window_start;
    j["window_end"] = fit->window_end;
    j["strobes_used"] = fit->used;
  } else {
    j["status"] = std::string("fit refused: ") + fit_error->what();
    j["nu_hat"] = nullptr;
  }
  write_json(ctx.out_dir / "fig1.json", j);
  if (fit_error) throw *fit_error;
  *ctx.log << "repro-fig1: nu_hat = " << format_double(fit->rate) << " (r2 " << format_double(fit->r2)
           << "), Floquet nu = " << format_double(cycle.dominant_exponent().real()) << '\n';
}

inline void run_fig2(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  const SystemConfig s = system_or(c, "coupled_vdp");
  const DynSystem sys = make_system(s);
  const Vec x0 = initial_state(c, s);
  const double horizon = c.horizon.value_or(200.0);
  const double dt = c.dt.value_or(0.01);
  const double tol = c.tol.value_or(1e-12);
  const Observable obs = c.raw.contains("observables") ? make_observable(c.observables, s.dim) : full_state(s.dim);

  const TorusInfo torus = characterize_torus(sys, x0, obs, c.torus);
  DecomposeOptions dopt;
  dopt.tol = tol;
  const Decomposition dec = decompose(sys, x0, torus, horizon, dt, dopt);

  Metadata meta = metadata(ctx, sys, tol, dt);
  meta.set("horizon", horizon);
  meta.set("t_avg", c.torus.horizon);
  write_decomposition(ctx, dec, meta);

  const std::size_t n = dec.residual.size();
  const std::size_t tail_from = n - std::max<std::size_t>(1, n / 10);
  const double initial = dec.residual.state(0).cwiseAbs().maxCoeff();
  const double tail = sup_norm(dec.residual, tail_from, n);
  Json per = Json::array();
  for (int i = 0; i < s.dim; ++i) {
    double a = 0.0;
    for (std::size_t k = tail_from; k < n; ++k) a = std::max(a, std::abs(dec.residual.state(k)[i]));
    per.push_back(Json{{"component", i + 1}, {"initial", std::abs(dec.residual.state(0)[i])}, {"tail_sup", a}});
  }

  Json j = Json::object();
  j["metadata"] = meta.to_json();
  j["omegas"] = torus.omegas;
  j["phases"] = dec.phases;
  j["matched_state"] = vec_json(dec.matched_state);
  j["embedding_error"] = torus.embedding_error;
  j["resonance_gap"] = torus.resonance_gap;
  j["near_resonant"] = torus.near_resonant;
  j["residual_initial_sup"] = initial;
  j["residual_tail_sup"] = tail;
  j["tail_ratio"] = initial > 0.0 ? tail / initial : 0.0;
  j["components"] = std::move(per);
  write_json(ctx.out_dir / "fig2.json", j);
  *ctx.log << "repro-fig2: omegas = (" << format_double(torus.omegas.at(0))
           << (torus.omegas.size() > 1 ? ", " + format_double(torus.omegas[1]) : std::string()) << "), tail ratio "
           << format_double(j["tail_ratio"].get<double>()) << '\n';
}

inline void run_resolvent(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  const SystemConfig s = require_system(c);
  if (!c.resolvent.grid) config_error("resolvent.s_grid", "required for resolvent");
  const auto& grid_cfg = *c.resolvent.grid;
  for (const Complex p : grid_cfg.points) {
    if (!(p.real() > 0.0)) {
      fail(ErrorKind::roc_violation, "s-grid point " + format_double(p.real()) + (p.imag() < 0 ? "" : "+") +
                                         format_double(p.imag()) +
                                         "i lies outside the region of convergence Re(s) > 0");
    }
  }
  const DynSystem sys = make_system(s);
  const Vec x0 = initial_state(c, s);
  const Observable obs = make_observable(c.observables, s.dim);
  const double dt = c.dt.value_or(0.01);
  const double tol = c.tol.value_or(1e-12);
  const double t_max = c.resolvent.t_max.value_or(c.horizon.value_or(100.0));
  const double horizon = std::max(t_max, c.horizon.value_or(t_max));

  const Trajectory tr = integrate(sys, x0, horizon, dt, tol, true);
  const SampledSignal y = sample_observable(tr, obs);
  const LaplaceGrid grid = laplace_grid(y, grid_cfg.points, t_max);

  Metadata meta = metadata(ctx, sys, tol, dt);
  meta.set("t_max", grid.truncation_t);
  Table t;
  t.columns = {"re_s", "im_s"};
  for (int i = 0; i < obs.m; ++i) t.columns.push_back("re_Y_" + std::to_string(i + 1));
  for (int i = 0; i < obs.m; ++i) t.columns.push_back("im_Y_" + std::to_string(i + 1));
  t.columns.push_back("trunc_bound");
  for (std::size_t k = 0; k < grid.points.size(); ++k) {
    std::vector<double> row{grid.points[k].real(), grid.points[k].imag()};
    for (int i = 0; i < obs.m; ++i) row.push_back(grid.values[k][i].real());
    for (int i = 0; i < obs.m; ++i) row.push_back(grid.values[k][i].imag());
    row.push_back(grid.bounds[k]);
    t.rows.push_back(std::move(row));
  }
  write_table(ctx.out_dir, "laplace_grid", t, meta, ctx.format);

  std::string model = c.resolvent.model;
  if (model == "auto") model = s.kind == "linear" ? "linear" : s.kind == "vdp" ? "limit_cycle" : "none";
  if (model == "linear" && s.kind != "linear") config_error("resolvent.model", "'linear' needs a linear system");

  Json j = Json::object();
  j["metadata"] = meta.to_json();
  j["model"] = model;
  std::optional<PoleResidueSet> prs;
  std::function<CVec(Complex)> reference;
  std::optional<double> omega;

  if (model == "linear") {
    const auto rows = linear_rows(c.observables, s.dim);
    PoleResidueSet combined;
    std::vector<PoleResidueSet> parts;
    for (const auto& row : rows) parts.push_back(linear_expansion(s.a, row, x0));
    for (std::size_t q = 0; q < parts.front().entries.size(); ++q) {
      CVec r(static_cast<Eigen::Index>(parts.size()));
      for (std::size_t i = 0; i < parts.size(); ++i) r[static_cast<Eigen::Index>(i)] = parts[i].entries[q].residue[0];
      const auto& e = parts.front().entries[q];
      combined.add(e.pole, r, e.tag, e.indices);
    }
    combined.roc_abscissa = parts.front().roc_abscissa;
    prs = combined;
    reference = [&s, rows, x0](Complex z) {
      CVec v(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = laplace_linear_analytic(s.a, rows[i], x0, z);
      return v;
    };
  } else if (model == "limit_cycle") {
    const LimitCycleInfo cycle = find_cycle(sys, x0, c.limit_cycle);
    omega = cycle.omega;
    const auto stat = stationary_residues(sys, x0, cycle, obs, c.resolvent.m_max, c.phase);
    DecomposeOptions dopt;
    dopt.tol = tol;
    dopt.phase = c.phase;
    const Decomposition dec = decompose(sys, x0, cycle, horizon, dt, dopt);
    SampledSignal residual;
    residual.dt = dt;
    for (std::size_t k = 0; k < dec.original.size(); ++k) {
      residual.values.push_back(obs(dec.original.state(k)) - obs(dec.stationary.state(k)));
    }
    TransientResidues trans;
    if (c.resolvent.k_max > 0) trans = transient_residues(residual, cycle, c.resolvent.k_max, c.resolvent.m_max);
    prs = build_expansion_limit_cycle(cycle, stat, trans, c.resolvent.k_max, c.resolvent.m_max);

    const double nu = cycle.dominant_exponent().real();
    j["omega"] = cycle.omega;
    j["nu"] = nu;
    j["period"] = cycle.period;
    if (c.resolvent.contour_radius < std::abs(nu)) {
      const auto continued = continued_transform(dec, obs, cycle.period, nu);
      const CVec contour =
          cauchy_residue(continued, Complex(0.0, cycle.omega), c.resolvent.contour_radius, c.resolvent.contour_points);
      const CVec& gla = stat.at(1);
      j["contour_check"] = Json{{"contour_residue", cvec_json(contour)},
                                {"gla_residue", cvec_json(gla)},
                                {"radius", c.resolvent.contour_radius},
                                {"relative_difference", (contour - gla).norm() / std::max(gla.norm(), 1e-300)}};
    }
  }

  if (prs) {
    Json agreement = Json::array();
    double worst = 0.0, worst_ref = 0.0;
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
      const Complex z = grid.points[k];
      const CVec model_value = expansion_eval(*prs, z);
      const double rel = (grid.values[k] - model_value).norm() / std::max(model_value.norm(), 1e-300);
      worst = std::max(worst, rel);
      Json entry{{"im_s", z.imag()}, {"re_s", z.real()}, {"rel_error_expansion", rel}};
      if (reference) {
        const CVec ref = reference(z);
        const double r = (grid.values[k] - ref).norm() / std::max(ref.norm(), 1e-300);
        worst_ref = std::max(worst_ref, r);
        entry["rel_error_analytic"] = r;
        entry["abs_error_analytic"] = (grid.values[k] - ref).norm();
        entry["trunc_bound"] = grid.bounds[k];
      }
      agreement.push_back(std::move(entry));
    }
    const double energy = explained_energy(*prs, y);
    j["expansion"] = pole_residue_json(*prs);
    j["agreement"] = std::move(agreement);
    j["max_rel_error_expansion"] = worst;
    if (reference) j["max_rel_error_analytic"] = worst_ref;
    j["explained_energy"] = energy;
    j["continuous_spectrum"] = energy < kPointSpectrumEnergyThreshold;
  } else {
    j["expansion"] = nullptr;
  }

  if (grid_cfg.is_line && grid.points.size() >= 3) {
    Json peaks = Json::array();
    for (const double w : spectrum_peaks(grid, 0)) {
      Json p{{"omega", w}};
      if (omega) {
        p["harmonic"] = static_cast<int>(std::lround(w / *omega));
        p["offset"] = w - std::lround(w / *omega) * *omega;
      }
      peaks.push_back(std::move(p));
    }
    j["peaks"] = std::move(peaks);
    j["sigma"] = grid_cfg.sigma;
  }
  write_json(ctx.out_dir / "resolvent.json", j);
  *ctx.log << "resolvent: " << grid.points.size() << " grid points, model " << model << '\n';
}

inline void run_dmd(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  Metadata meta = base_metadata(ctx.command, c.raw);
  auto [full, columns] = load_signal(ctx, meta);
  const SampledSignal sig = window_signal(full, c.dmd.t_start, c.dmd.t_end, c.dmd.stride);
  if (static_cast<int>(sig.size()) <= c.dmd.delay) {
    fail(ErrorKind::degenerate_fit, "dmd: delay depth " + std::to_string(c.dmd.delay) + " needs more than " +
                                        std::to_string(c.dmd.delay) + " samples");
  }
  meta.set("dt", sig.dt);
  meta.set("delay", std::to_string(c.dmd.delay));
  meta.set("rank_tol", c.dmd.rank_tol);
  const SpectrumEstimate est = dmd(delay_embed(snapshot_matrix(sig), c.dmd.delay), sig.dt, c.dmd.rank_tol);

  Table t;
  t.columns = {"re_mu", "im_mu", "re_lambda", "im_lambda", "abs_amplitude"};
  Json eigs = Json::array();
  const Eigen::Index m = sig.dim();
  for (std::size_t k = 0; k < est.discrete_eigs.size(); ++k) {
    const Complex mu = est.discrete_eigs[k];
    const Complex lam = est.cont_eigs[k];
    t.rows.push_back({mu.real(), mu.imag(), lam.real(), lam.imag(), std::abs(est.amplitudes[k])});
    eigs.push_back(Json{{"amplitude", complex_json(est.amplitudes[k])},
                        {"continuous", complex_json(lam)},
                        {"discrete", complex_json(mu)},
                        {"mode", cvec_json(est.modes[k].head(m))}});
  }
  write_table(ctx.out_dir, "dmd_eigenvalues", t, meta, ctx.format);
  Json j = Json::object();
  j["metadata"] = meta.to_json();
  j["columns"] = columns;
  j["dt"] = sig.dt;
  j["t0"] = sig.t0;
  j["samples"] = sig.size();
  j["rank"] = est.rank;
  j["reconstruction_error"] = est.reconstruction_error;
  j["ill_conditioned"] = est.ill_conditioned;
  j["eigenvalues"] = std::move(eigs);
  write_json(ctx.out_dir / "dmd.json", j);
  *ctx.log << "dmd: rank " << est.rank << ", reconstruction error " << format_double(est.reconstruction_error) << '\n';
}

inline void run_prony(const RunContext& ctx) {
  using namespace detail;
  const auto& c = ctx.config;
  Metadata meta = base_metadata(ctx.command, c.raw);
  auto [full, columns] = load_signal(ctx, meta);
  if (c.prony.component >= full.dim()) config_error("prony.component", "out of range for the input columns");
  const SampledSignal sig = window_signal(full, c.prony.t_start, c.prony.t_end, c.prony.stride);
  const std::vector<Complex> ys = sig.component(c.prony.component);
  meta.set("dt", sig.dt);
  meta.set("order", std::to_string(c.prony.order));

  Json j = Json::object();
  if (c.prony.sweep_max > 0) {
    Json sweep = Json::array();
    for (const auto& e : prony_sweep(ys, sig.dt, std::max(1, c.prony.sweep_min), c.prony.sweep_max)) {
      sweep.push_back(Json{{"message", e.message}, {"ok", e.ok}, {"order", e.order}, {"poles", complex_list(e.poles)}});
    }
    j["sweep"] = std::move(sweep);
  }
  const PoleResidueSet prs = prony(ys, sig.dt, c.prony.order);
  double err = 0.0, total = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    err += std::norm(expansion_time_value(prs, static_cast<double>(k) * sig.dt)[0] - ys[k]);
    total += std::norm(ys[k]);
  }

  Table t;
  t.columns = {"re_pole", "im_pole", "re_residue", "im_residue"};
  for (const auto& e : prs.entries) t.rows.push_back({e.pole.real(), e.pole.imag(), e.residue[0].real(), e.residue[0].imag()});
  write_table(ctx.out_dir, "prony_poles", t, meta, ctx.format);

  j["metadata"] = meta.to_json();
  j["column"] = columns.at(static_cast<std::size_t>(c.prony.component));
  j["dt"] = sig.dt;
  j["t0"] = sig.t0;
  j["samples"] = ys.size();
  j["expansion"] = pole_residue_json(prs);
  j["relative_residual"] = total > 0.0 ? std::sqrt(err / total) : 0.0;
  write_json(ctx.out_dir / "prony.json", j);
  *ctx.log << "prony: order " << c.prony.order << ", relative residual " << format_double(j["relative_residual"].get<double>())
           << '\n';
}

inline const std::map<std::string, std::function<void(const RunContext&)>>& command_table() {
  static const std::map<std::string, std::function<void(const RunContext&)>> table{
      {"simulate", run_simulate}, {"floquet", run_floquet}, {"repro-fig1", run_fig1}, {"repro-fig2", run_fig2},
      {"resolvent", run_resolvent}, {"dmd", run_dmd},       {"prony", run_prony}};
  return table;
}

/// Runs one command and converts failures into an exit code with a message on `err`.
inline int run_command(const RunContext& ctx, std::ostream& err) {
  const auto& table = command_table();
  const auto it = table.find(ctx.command);
  if (it == table.end()) {
    err << "error: unknown command '" << ctx.command << "'\n";
    return 2;
  }
  try {
    it->second(ctx);
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error [config]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error [numeric]: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace koopman::cli
