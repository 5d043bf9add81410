#pragma once

// Asymptotic phase from Laplace/Fourier time averages (GLA), phase matching of
// off-attractor states onto limit cycles and quasi-periodic tori.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "koopman/dynsys.hpp"
#include "koopman/error.hpp"
#include "koopman/limit_cycle.hpp"
#include "koopman/signal.hpp"
#include "koopman/spectral.hpp"
#include "koopman/types.hpp"

namespace koopman {

enum class AverageMethod {
  plain,       // trapezoid (1/T) int_0^T e^{-lambda t} y dt
  richardson,  // 2 A(T) - A(T/2): cancels the O(1/T) transient contribution
  bump,        // smooth bump weight on [0, T]; super-convergent on quasi-periodic data
};

struct AverageResult {
  CVec value;
  double gap = 0.0;  // max-norm distance to the same estimate on half the horizon
  double horizon = 0.0;
};

namespace detail {

inline double bump_weight(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return std::exp(-1.0 / (u * (1.0 - u)));
}

/// Weighted average over the first `count` samples, time measured from the first sample.
inline CVec windowed_average(const SampledSignal& s, Complex lambda, std::size_t count, bool bump) {
  require(count >= 3 && count <= s.size(), "time average: window needs at least 3 samples");
  CVec acc = CVec::Zero(s.dim());
  double wsum = 0.0;
  const double last = static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const double w =
        bump ? bump_weight(static_cast<double>(k) / last) : ((k == 0 || k + 1 == count) ? 0.5 : 1.0);
    if (w == 0.0) continue;
    const double t = static_cast<double>(k) * s.dt;
    acc += (w * std::exp(-lambda * t)) * s.values[k];
    wsum += w;
  }
  return acc / wsum;
}

}  // namespace detail

/// GLA time average of a sampled output at eigenvalue lambda.
inline AverageResult time_average(const SampledSignal& s, Complex lambda, AverageMethod method = AverageMethod::plain) {
  s.validate();
  const std::size_t n = s.size();
  require(n >= 9, "time_average: need at least 9 samples");
  const std::size_t half = (n - 1) / 2 + 1;
  const std::size_t quarter = (n - 1) / 4 + 1;
  AverageResult r;
  r.horizon = s.span();
  switch (method) {
    case AverageMethod::plain: {
      r.value = detail::windowed_average(s, lambda, n, false);
      r.gap = (r.value - detail::windowed_average(s, lambda, half, false)).cwiseAbs().maxCoeff();
      break;
    }
    case AverageMethod::richardson: {
      const CVec a_full = detail::windowed_average(s, lambda, n, false);
      const CVec a_half = detail::windowed_average(s, lambda, half, false);
      const CVec a_quarter = detail::windowed_average(s, lambda, quarter, false);
      r.value = 2.0 * a_full - a_half;
      r.gap = (r.value - (2.0 * a_half - a_quarter)).cwiseAbs().maxCoeff();
      break;
    }
    case AverageMethod::bump: {
      r.value = detail::windowed_average(s, lambda, n, true);
      r.gap = (r.value - detail::windowed_average(s, lambda, half, true)).cwiseAbs().maxCoeff();
      break;
    }
  }
  return r;
}

struct AverageOptions {
  double dt = 0.01;
  double tol = 1e-11;
  AverageMethod method = AverageMethod::plain;
  bool check = true;
  double rel_tol = 1e-3;  // accept when gap < rel_tol |value| + abs_tol
  double abs_tol = 1e-6;
};

/// (1/T) int_0^T e^{-lambda t} f(S^t x0) dt, the time-average estimate of the
/// spectral projection onto eigenvalue lambda. Meaningful for Re(lambda) = 0
/// on attractor dynamics.
inline AverageResult gla_projection(const DynSystem& sys, const Vec& x0, Complex lambda, const Observable& obs,
                                    double t_avg, const AverageOptions& opt = {}) {
  require(t_avg > 0.0, "gla_projection: averaging horizon must be positive");
  const Trajectory tr = integrate(sys, x0, t_avg, opt.dt, opt.tol);
  AverageResult r = time_average(sample_observable(tr, obs), lambda, opt.method);
  const double mag = r.value.cwiseAbs().maxCoeff();
  if (opt.check && !(r.gap < opt.rel_tol * mag + opt.abs_tol)) {
    std::ostringstream os;
    os << "gla_projection: average not converged at T=" << t_avg << " (gap " << r.gap << ", |value| " << mag << ")";
    fail(ErrorKind::non_convergence, os.str());
  }
  return r;
}

/// Fourier average at angular frequency omega (lambda = i omega).
inline AverageResult fourier_average(const DynSystem& sys, const Vec& x0, double omega, const Observable& obs,
                                     double t_avg, const AverageOptions& opt = {}) {
  return gla_projection(sys, x0, Complex(0.0, omega), obs, t_avg, opt);
}

// ---------------------------------------------------------------------------
// Limit cycles

struct PhaseOptions {
  double periods = 400.0;  // averaging horizon in periods (multiple of 4)
  std::size_t points_per_period = 512;
  double tol = 1e-11;
  AverageMethod method = AverageMethod::richardson;
  double rel_tol = 1e-3;
  double min_magnitude = 1e-8;
};

struct PhaseResult {
  double phase = 0.0;  // [0, 2 pi)
  Complex average;     // Fourier average of the chosen observable component at Omega
  double t_avg = 0.0;
  double convergence_gap = 0.0;
  int component = 0;
};

namespace detail {

inline AverageResult cycle_average(const DynSystem& sys, const Vec& x0, const LimitCycleInfo& cycle,
                                   const Observable& obs, const PhaseOptions& opt) {
  const double dt = cycle.period / static_cast<double>(opt.points_per_period);
  const double t_avg = opt.periods * cycle.period;
  const Trajectory tr = integrate(sys, x0, t_avg, dt, opt.tol);
  return time_average(sample_observable(tr, obs), Complex(0.0, cycle.omega), opt.method);
}

}  // namespace detail

/// Asymptotic phase of x0 relative to the cycle anchor (theta = 0).
inline PhaseResult phase_of(const DynSystem& sys, const Vec& x0, const LimitCycleInfo& cycle,
                            const Observable& obs = state_component(0), const PhaseOptions& opt = {}) {
  require(cycle.period > 0.0, "phase_of: invalid cycle");
  const AverageResult ref = detail::cycle_average(sys, cycle.anchor, cycle, obs, opt);
  const AverageResult cur = detail::cycle_average(sys, x0, cycle, obs, opt);
  Eigen::Index c = 0;
  ref.value.cwiseAbs().maxCoeff(&c);
  const double ref_mag = std::abs(ref.value[c]);
  const double cur_mag = std::abs(cur.value[c]);
  if (ref_mag < opt.min_magnitude || cur_mag < opt.min_magnitude) {
    fail(ErrorKind::invalid_argument, "phase_of: observable '" + obs.label + "' is blind to the cycle phase");
  }
  if (!(cur.gap < opt.rel_tol * cur_mag) || !(ref.gap < opt.rel_tol * ref_mag)) {
    std::ostringstream os;
    os << "phase_of: Fourier average not converged (gap " << cur.gap << " vs |average| " << cur_mag << ")";
    fail(ErrorKind::non_convergence, os.str());
  }
  PhaseResult r;
  r.phase = wrap_phase(std::arg(cur.value[c]) - std::arg(ref.value[c]));
  r.average = cur.value[c];
  r.t_avg = cur.horizon;
  r.convergence_gap = cur.gap;
  r.component = static_cast<int>(c);
  return r;
}

struct AttractorMatch {
  Vec state;                  // on-attractor state with the same asymptotic phase(s)
  std::vector<double> phases;
  double convergence_gap = 0.0;
};

/// On-cycle state on the isochron of x0.
inline AttractorMatch match_on_attractor(const DynSystem& sys, const Vec& x0, const LimitCycleInfo& cycle,
                                         const Observable& obs = state_component(0), const PhaseOptions& opt = {}) {
  const PhaseResult p = phase_of(sys, x0, cycle, obs, opt);
  const double tau = p.phase / cycle.omega;
  AttractorMatch m;
  m.state = tau > 0.0 ? flow(sys, cycle.anchor, tau, opt.tol) : cycle.anchor;
  m.phases = {p.phase};
  m.convergence_gap = p.convergence_gap;
  return m;
}

// ---------------------------------------------------------------------------
// Quasi-periodic tori

struct TorusOptions {
  double t_settle = 500.0;
  double horizon = 2000.0;  // averaging window for frequencies, phases, and the embedding
  double dt = 0.02;
  double tol = 1e-11;
  std::size_t frequencies = 2;
  int harmonics = 8;              // |m_j| <= harmonics in the torus embedding
  int kam_order = 20;             // resonance search order
  double resonance_tol = 1e-3;    // flag |m . omega| below this (rad/s)
  double phase_tol = 1e-3;        // max phase change between half and full window (rad)
  double min_magnitude = 1e-8;
};

struct TorusInfo {
  std::vector<double> omegas;
  Vec anchor;  // all phases zero
  Observable observable;
  std::vector<int> components;  // observable component used for each frequency
  std::vector<Complex> anchor_averages;
  int harmonics = 0;
  std::vector<std::vector<int>> indices;  // multi-indices of the embedding
  std::vector<CVec> coefficients;         // Fourier coefficients of the state over the torus
  double embedding_error = 0.0;           // relative, sampled along the anchor orbit
  double resonance_gap = 0.0;             // min |m . omega| over 0 < |m|_inf <= kam_order
  std::vector<int> resonance_index;
  bool near_resonant = false;
  TorusOptions options;

  /// Torus embedding evaluated at the given phases.
  Vec evaluate(std::span<const double> phases) const {
    require(phases.size() == omegas.size(), "TorusInfo::evaluate: wrong number of phases");
    const std::size_t l = omegas.size();
    const int width = 2 * harmonics + 1;
    std::vector<Complex> pw(l * static_cast<std::size_t>(width));
    for (std::size_t j = 0; j < l; ++j) {
      for (int m = -harmonics; m <= harmonics; ++m) {
        pw[j * width + static_cast<std::size_t>(m + harmonics)] = std::polar(1.0, m * phases[j]);
      }
    }
    CVec acc = CVec::Zero(anchor.size());
    for (std::size_t q = 0; q < indices.size(); ++q) {
      Complex z = 1.0;
      for (std::size_t j = 0; j < l; ++j) z *= pw[j * width + static_cast<std::size_t>(indices[q][j] + harmonics)];
      acc += z * coefficients[q];
    }
    return acc.real();
  }
};

namespace detail {

inline std::vector<std::vector<int>> multi_indices(std::size_t l, int order) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(l, -order);
  while (true) {
    out.push_back(cur);
    std::size_t j = 0;
    while (j < l && cur[j] == order) cur[j++] = -order;
    if (j == l) break;
    ++cur[j];
  }
  return out;
}

inline double golden_maximize(const std::function<double(double)>& f, double a, double b, int iterations) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iterations; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Frequencies, reference phases, and Fourier embedding of the attracting
/// torus reached from x0. Frequencies come from FFT peaks that are not integer
/// combinations of stronger ones, refined by maximizing bump-weighted averages.
inline TorusInfo characterize_torus(const DynSystem& sys, const Vec& x0, const Observable& obs,
                                    const TorusOptions& opt = {}) {
  require(opt.frequencies >= 1, "characterize_torus: need at least one frequency");
  TorusInfo info;
  info.options = opt;
  info.observable = obs;
  info.harmonics = opt.harmonics;
  info.anchor = settle(sys, x0, opt.t_settle, opt.tol);
  const Trajectory tr = integrate(sys, info.anchor, opt.horizon, opt.dt, opt.tol);
  const SampledSignal ys = sample_observable(tr, obs);

  std::vector<SpectralPeak> candidates;
  for (int c = 0; c < ys.dim(); ++c) {
    Vec re(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t k = 0; k < ys.size(); ++k) re[static_cast<Eigen::Index>(k)] = ys.values[k][c].real();
    const auto peaks = spectral_peaks(re, opt.dt, 16);
    candidates.insert(candidates.end(), peaks.begin(), peaks.end());
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) { return a.magnitude > b.magnitude; });
  if (candidates.empty()) fail(ErrorKind::not_found, "characterize_torus: no spectral peaks");
  const double bin = candidates.front().bin_width;

  auto power = [&](double omega) {
    return detail::windowed_average(ys, Complex(0.0, omega), ys.size(), true).squaredNorm();
  };
  auto is_combination = [&](double omega) {
    if (omega < 3.0 * bin) return true;
    if (info.omegas.empty()) return false;
    for (const auto& m : detail::multi_indices(info.omegas.size(), 4)) {
      double s = 0.0;
      for (std::size_t j = 0; j < m.size(); ++j) s += m[j] * info.omegas[j];
      if (std::abs(std::abs(s) - omega) < 3.0 * bin) return true;
    }
    return false;
  };
  for (const auto& peak : candidates) {
    if (info.omegas.size() == opt.frequencies) break;
    if (is_combination(peak.omega)) continue;
    info.omegas.push_back(detail::golden_maximize(power, peak.omega - bin, peak.omega + bin, 60));
  }
  if (info.omegas.size() < opt.frequencies) {
    std::ostringstream os;
    os << "characterize_torus: resolved " << info.omegas.size() << " of " << opt.frequencies
       << " independent frequencies";
    fail(ErrorKind::not_found, os.str());
  }

  for (const double omega : info.omegas) {
    const CVec avg = detail::windowed_average(ys, Complex(0.0, omega), ys.size(), true);
    Eigen::Index c = 0;
    avg.cwiseAbs().maxCoeff(&c);
    if (std::abs(avg[c]) < opt.min_magnitude) {
      fail(ErrorKind::invalid_argument, "characterize_torus: observable blind to a torus frequency");
    }
    info.components.push_back(static_cast<int>(c));
    info.anchor_averages.push_back(avg[c]);
  }

  // Fourier embedding of the state over the torus, bump-weighted along the anchor orbit.
  const std::size_t l = info.omegas.size();
  info.indices = detail::multi_indices(l, opt.harmonics);
  require(info.indices.size() <= 20000, "characterize_torus: embedding too large; reduce harmonics");
  const int n = sys.dim();
  const int width = 2 * opt.harmonics + 1;
  info.coefficients.assign(info.indices.size(), CVec::Zero(n));
  std::vector<Complex> pw(l * static_cast<std::size_t>(width));
  double wsum = 0.0;
  const double last = static_cast<double>(tr.size() - 1);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double w = detail::bump_weight(static_cast<double>(k) / last);
    if (w < 1e-300) continue;
    const double t = tr.time(k);
    for (std::size_t j = 0; j < l; ++j) {
      for (int m = -opt.harmonics; m <= opt.harmonics; ++m) {
        pw[j * width + static_cast<std::size_t>(m + opt.harmonics)] = std::polar(1.0, -m * info.omegas[j] * t);
      }
    }
    const CVec x = tr.state(k).cast<Complex>();
    for (std::size_t q = 0; q < info.indices.size(); ++q) {
      Complex z = w;
      for (std::size_t j = 0; j < l; ++j) z *= pw[j * width + static_cast<std::size_t>(info.indices[q][j] + opt.harmonics)];
      info.coefficients[q] += z * x;
    }
    wsum += w;
  }
  for (auto& c : info.coefficients) c /= wsum;

  double worst = 0.0;
  const double scale = std::max(1.0, tr.state(tr.size() / 2).norm());
  std::vector<double> th(l);
  for (std::size_t k = tr.size() / 4; k < 3 * tr.size() / 4; k += 97) {
    for (std::size_t j = 0; j < l; ++j) th[j] = info.omegas[j] * tr.time(k);
    worst = std::max(worst, (info.evaluate(th) - tr.state(k)).norm() / scale);
  }
  info.embedding_error = worst;

  info.resonance_gap = std::numeric_limits<double>::infinity();
  if (l >= 2) {
    for (const auto& m : detail::multi_indices(l, opt.kam_order)) {
      if (std::all_of(m.begin(), m.end(), [](int v) { return v == 0; })) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < l; ++j) s += m[j] * info.omegas[j];
      if (std::abs(s) < info.resonance_gap) {
        info.resonance_gap = std::abs(s);
        info.resonance_index = m;
      }
    }
    info.near_resonant = info.resonance_gap < opt.resonance_tol;
  }
  return info;
}

struct TorusPhaseResult {
  std::vector<double> phases;  // relative to the torus anchor, [0, 2 pi)
  std::vector<double> gaps;    // |phase(T) - phase(T/2)| per frequency
};

/// One asymptotic phase per torus frequency, from independent bump-weighted
/// Fourier averages.
inline TorusPhaseResult torus_phases(const DynSystem& sys, const Vec& x0, const TorusInfo& torus) {
  const auto& opt = torus.options;
  const Trajectory tr = integrate(sys, x0, opt.horizon, opt.dt, opt.tol);
  const SampledSignal ys = sample_observable(tr, torus.observable);
  const std::size_t half = (ys.size() - 1) / 2 + 1;
  TorusPhaseResult r;
  for (std::size_t j = 0; j < torus.omegas.size(); ++j) {
    const Complex lambda(0.0, torus.omegas[j]);
    const int c = torus.components[j];
    const Complex full = detail::windowed_average(ys, lambda, ys.size(), true)[c];
    const Complex part = detail::windowed_average(ys, lambda, half, true)[c];
    if (std::abs(full) < opt.min_magnitude) {
      fail(ErrorKind::invalid_argument, "torus_phases: observable blind to a torus frequency from this state");
    }
    r.phases.push_back(wrap_phase(std::arg(full) - std::arg(torus.anchor_averages[j])));
    r.gaps.push_back(std::abs(phase_distance(std::arg(full), std::arg(part))));
  }
  const double worst = *std::max_element(r.gaps.begin(), r.gaps.end());
  if (!(worst < opt.phase_tol)) {
    std::ostringstream os;
    os << "torus_phases: phases not converged (gap " << worst << " rad)";
    fail(ErrorKind::non_convergence, os.str());
  }
  return r;
}

/// On-torus state carrying the same phases as x0.
inline AttractorMatch match_on_attractor(const DynSystem& sys, const Vec& x0, const TorusInfo& torus) {
  const TorusPhaseResult p = torus_phases(sys, x0, torus);
  AttractorMatch m;
  m.state = torus.evaluate(p.phases);
  m.phases = p.phases;
  m.convergence_gap = *std::max_element(p.gaps.begin(), p.gaps.end());
  return m;
}

}  // namespace koopman
