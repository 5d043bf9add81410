#pragma once

// Stationary / non-stationary split of a trajectory and the decay rate of the
// non-stationary part from period-strobed samples.

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "koopman/dynsys.hpp"
#include "koopman/error.hpp"
#include "koopman/limit_cycle.hpp"
#include "koopman/phase.hpp"
#include "koopman/types.hpp"

namespace koopman {

struct DecayFit {
  double rate = 0.0;  // fitted slope of log|residual| (1/s)
  double intercept = 0.0;
  double r2 = 0.0;
  double fit_residual = 0.0;  // RMS misfit in log space
  double window_start = 0.0;
  double window_end = 0.0;
  std::size_t used = 0;
  std::vector<double> strobe_times;
  std::vector<double> strobe_values;  // |residual| at each strobe
  std::vector<bool> strobe_used;
};

struct Decomposition {
  Trajectory original;
  Trajectory stationary;
  Trajectory residual;
  Vec matched_state;
  std::vector<double> phases;
  std::optional<DecayFit> decay_fit;

  /// original(t) - stationary(t) at arbitrary t.
  Vec residual_at(double t) const { return original.at(t) - stationary.at(t); }
};

/// Pairs two trajectories on the same grid; residual = original - stationary.
inline Decomposition make_decomposition(Trajectory original, Trajectory stationary, Vec matched_state = {},
                                        std::vector<double> phases = {}) {
  require(original.size() == stationary.size() && original.dim() == stationary.dim() &&
              original.t0() == stationary.t0() && original.dt() == stationary.dt(),
          "make_decomposition: trajectories must share the sampling grid");
  std::vector<Vec> diff;
  diff.reserve(original.size());
  for (std::size_t k = 0; k < original.size(); ++k) diff.push_back(original.state(k) - stationary.state(k));
  Trajectory residual(original.t0(), original.dt(), std::move(diff));
  return Decomposition{std::move(original), std::move(stationary), std::move(residual), std::move(matched_state),
                       std::move(phases), std::nullopt};
}

struct DecomposeOptions {
  double tol = 1e-12;
  Observable phase_observable = state_component(0);
  PhaseOptions phase;
};

namespace detail {

inline Decomposition decompose_from_match(const DynSystem& sys, const Vec& x0, const AttractorMatch& match,
                                          double horizon, double dt, double tol) {
  Trajectory original = integrate(sys, x0, horizon, dt, tol, true);
  Trajectory stationary = integrate(sys, match.state, horizon, dt, tol, true);
  return make_decomposition(std::move(original), std::move(stationary), match.state, match.phases);
}

}  // namespace detail

/// Limit-cycle case: the stationary part starts on the cycle, on the isochron of x0.
inline Decomposition decompose(const DynSystem& sys, const Vec& x0, const LimitCycleInfo& cycle, double horizon,
                               double dt, const DecomposeOptions& opt = {}) {
  const AttractorMatch match = match_on_attractor(sys, x0, cycle, opt.phase_observable, opt.phase);
  return detail::decompose_from_match(sys, x0, match, horizon, dt, opt.tol);
}

/// Torus case: the stationary part starts on the torus with the same phases as x0.
inline Decomposition decompose(const DynSystem& sys, const Vec& x0, const TorusInfo& torus, double horizon,
                               double dt, const DecomposeOptions& opt = {}) {
  const AttractorMatch match = match_on_attractor(sys, x0, torus);
  return detail::decompose_from_match(sys, x0, match, horizon, dt, opt.tol);
}

struct DecayFitOptions {
  double discard_fraction = 0.3;  // leading share of the above-floor span excluded from the fit
  double floor = 1e-10;           // strobes below this magnitude are excluded
  double strobe_offset = 0.0;     // strobe at offset + k T
  std::size_t min_samples = 4;
};

/// Least-squares slope of log|residual_component| sampled at multiples of the period.
inline DecayFit decay_rate(const Decomposition& dec, int component, double period, const DecayFitOptions& opt = {}) {
  require(period > 0.0, "decay_rate: period must be positive");
  require(component >= 0 && component < dec.residual.dim(), "decay_rate: component out of range");
  const double t0 = dec.original.t0();
  const double t_end = dec.original.t_end();

  DecayFit fit;
  double last_above = t0;
  for (std::size_t k = 0;; ++k) {
    const double t = t0 + opt.strobe_offset + static_cast<double>(k) * period;
    if (t > t_end + 1e-9 * period) break;
    const double v = std::abs(dec.residual_at(std::min(t, t_end))[component]);
    fit.strobe_times.push_back(t);
    fit.strobe_values.push_back(v);
    if (v >= opt.floor && std::isfinite(v)) last_above = t;
  }
  // The discarded lead-in is a fraction of the span that still carries signal.
  const double start = t0 + opt.discard_fraction * (last_above - t0);
  fit.window_start = start;
  std::vector<double> xs, ys;
  bool any_above_floor = false;
  for (std::size_t k = 0; k < fit.strobe_times.size(); ++k) {
    const double t = fit.strobe_times[k];
    const double v = fit.strobe_values[k];
    const bool above = v >= opt.floor && std::isfinite(v);
    any_above_floor = any_above_floor || (t >= start && above);
    const bool use = t >= start && above;
    fit.strobe_used.push_back(use);
    if (use) {
      xs.push_back(t);
      ys.push_back(std::log(v));
    }
  }
  if (!any_above_floor) fail(ErrorKind::degenerate_fit, "decay_rate: residual at numeric floor over the fit window");
  if (xs.size() < opt.min_samples) {
    std::ostringstream os;
    os << "decay_rate: only " << xs.size() << " usable strobe samples (need " << opt.min_samples << ")";
    fail(ErrorKind::degenerate_fit, os.str());
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.rate = sxy / sxx;
  fit.intercept = my - fit.rate * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.rate * xs[i]);
    sse += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.fit_residual = std::sqrt(sse / n);
  fit.used = xs.size();
  fit.window_end = xs.back();
  return fit;
}

}  // namespace koopman
