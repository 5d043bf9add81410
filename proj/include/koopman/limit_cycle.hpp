#pragma once

// Stable limit cycles: settling, period from Poincare-section returns, and
// Floquet multipliers/exponents of the monodromy matrix.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "koopman/dynsys.hpp"
#include "koopman/error.hpp"
#include "koopman/spectral.hpp"
#include "koopman/types.hpp"

namespace koopman {

struct LimitCycleOptions {
  double tol = 1e-11;               // integrator tolerance for period and monodromy
  double t_settle = 200.0;          // transient discarded before anchoring
  std::size_t samples = 512;        // phase samples stored on the cycle
  double trivial_tol = 1e-3;        // max |mu - 1| for the multiplier along the flow
  double closure_tol = 1e-4;        // max relative return-map displacement
  double fft_horizon = 400.0;       // coarse FFT window when no period hint is given
  double fft_dt = 0.05;
};

struct PhaseSample {
  double theta;
  Vec state;
};

struct LimitCycleInfo {
  double period = 0.0;
  double omega = 0.0;  // 2 pi / period
  Vec anchor;          // theta = 0
  std::vector<PhaseSample> cycle_samples;
  std::vector<Complex> multipliers;  // nontrivial, sorted by decreasing modulus
  std::vector<Complex> exponents;    // log(mu) / period, principal branch
  Complex trivial_multiplier{1.0, 0.0};
  Mat monodromy;

  Complex dominant_exponent() const {
    if (exponents.empty()) fail(ErrorKind::not_found, "LimitCycleInfo: no nontrivial exponents");
    return exponents.front();
  }
};

struct PeriodEstimate {
  double period = 0.0;
  double omega = 0.0;
  double fft_omega = 0.0;
  double fft_bin_width = 0.0;
  bool fft_consistent = false;  // |omega - fft_omega| within one bin
};

/// S^{t_settle}(x0).
inline Vec settle(const DynSystem& sys, const Vec& x0, double t_settle, double tol = 1e-9) {
  require(t_settle >= 0.0, "settle: negative settle time");
  return flow(sys, x0, t_settle, tol);
}

namespace detail {

inline std::size_t dominant_component(const Trajectory& tr) {
  std::size_t best = 0;
  double best_var = -1.0;
  for (int i = 0; i < tr.dim(); ++i) {
    const Vec c = tr.component(i);
    const double var = (c.array() - c.mean()).square().sum();
    if (var > best_var) {
      best_var = var;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

}  // namespace detail

/// Period of the cycle through x_on_cycle from the first return to the
/// hyperplane through it with normal F(x_on_cycle). An FFT of a long on-cycle
/// signal provides the coarse horizon when no hint is given, and a cross-check.
inline PeriodEstimate find_period(const DynSystem& sys, const Vec& x_on_cycle, std::optional<double> hint_period = {},
                                  const LimitCycleOptions& opt = {}) {
  require(x_on_cycle.size() == sys.dim(), "find_period: state has wrong dimension");
  const Vec normal = sys.field(x_on_cycle);
  const double scale = std::max(1.0, x_on_cycle.norm());
  if (normal.norm() < 1e-9 * scale) fail(ErrorKind::not_found, "find_period: state is an equilibrium, no limit cycle");

  PeriodEstimate est;
  {
    const double horizon = hint_period ? 64.0 * *hint_period : opt.fft_horizon;
    const double dt = hint_period ? *hint_period / 64.0 : opt.fft_dt;
    const Trajectory tr = integrate(sys, x_on_cycle, horizon, dt, 1e-9);
    const auto peak = dominant_frequency(tr.component(static_cast<int>(detail::dominant_component(tr))), dt);
    est.fft_omega = peak.omega;
    est.fft_bin_width = peak.bin_width;
  }
  const double hint = hint_period ? *hint_period : kTwoPi / est.fft_omega;
  const double horizon = 3.0 * hint;

  auto g = [&](const Vec& x) { return normal.dot(x - x_on_cycle); };
  std::optional<double> crossing;
  double max_dist = 0.0;
  IntegratorOptions iopt;
  iopt.tol = opt.tol;
  iopt.h_max = hint / 16.0;
  detail::dopri5([&sys](const Vec& y) { return sys.field(y); }, x_on_cycle, 0.0, horizon, iopt,
                 [&](const detail::StepView& sv) {
                   const Vec a = sv.start();
                   const Vec b = sv.end();
                   max_dist = std::max(max_dist, (b - x_on_cycle).norm());
                   const double ga = g(a), gb = g(b);
                   if (!(ga < 0.0 && gb >= 0.0)) return true;
                   double lo = sv.t, hi = sv.t + sv.h;
                   for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
                     const double mid = 0.5 * (lo + hi);
                     (g(sv.eval(mid)) < 0.0 ? lo : hi) = mid;
                   }
                   const double tc = 0.5 * (lo + hi);
                   // Far crossings of the hyperplane belong to another arc of the orbit.
                   if ((sv.eval(tc) - x_on_cycle).norm() > 0.1 * max_dist) return true;
                   crossing = tc;
                   return false;
                 });
  if (!crossing) {
    std::ostringstream os;
    os << "find_period: no return to the section within " << horizon << " s (not a cycle)";
    fail(ErrorKind::not_found, os.str());
  }
  const Vec back = flow(sys, x_on_cycle, *crossing, opt.tol);
  if ((back - x_on_cycle).norm() > opt.closure_tol * scale) {
    std::ostringstream os;
    os << "find_period: orbit does not close (return displacement " << (back - x_on_cycle).norm() << ")";
    fail(ErrorKind::not_found, os.str());
  }
  est.period = *crossing;
  est.omega = kTwoPi / est.period;
  est.fft_consistent = std::abs(est.omega - est.fft_omega) <= est.fft_bin_width;
  return est;
}

/// K states at theta_k = 2 pi k / K obtained by flowing the anchor.
inline std::vector<PhaseSample> parameterize_cycle(const DynSystem& sys, const Vec& x_on_cycle, double period,
                                                   std::size_t count, double tol = 1e-11) {
  require(period > 0.0, "parameterize_cycle: period must be positive");
  require(count > 0, "parameterize_cycle: need at least one sample");
  const auto dense = flow_dense(sys, x_on_cycle, period, tol);
  std::vector<PhaseSample> out;
  out.reserve(count);
  out.push_back({0.0, x_on_cycle});
  for (std::size_t k = 1; k < count; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(count);
    out.push_back({kTwoPi * frac, (*dense)(period * frac)});
  }
  return out;
}

/// Monodromy over one period and its nontrivial multipliers.
inline LimitCycleInfo floquet(const DynSystem& sys, const Vec& x_on_cycle, double period,
                              const LimitCycleOptions& opt = {}) {
  require(period > 0.0, "floquet: period must be positive");
  LimitCycleInfo info;
  info.period = period;
  info.omega = kTwoPi / period;
  info.anchor = x_on_cycle;
  info.monodromy = integrate_variational(sys, x_on_cycle, period, opt.tol).phi;

  Eigen::EigenSolver<Mat> es(info.monodromy, false);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "floquet: eigenvalue solver failed");
  std::vector<Complex> mus(es.eigenvalues().begin(), es.eigenvalues().end());
  auto trivial = std::min_element(mus.begin(), mus.end(),
                                  [](Complex a, Complex b) { return std::abs(a - 1.0) < std::abs(b - 1.0); });
  if (std::abs(*trivial - 1.0) > opt.trivial_tol) {
    std::ostringstream os;
    os << "floquet: no multiplier within " << opt.trivial_tol << " of 1 (nearest " << *trivial
       << "); bad cycle point or period";
    fail(ErrorKind::not_found, os.str());
  }
  info.trivial_multiplier = *trivial;
  mus.erase(trivial);
  std::stable_sort(mus.begin(), mus.end(), [](Complex a, Complex b) { return std::abs(a) > std::abs(b); });
  for (const Complex mu : mus) {
    if (std::abs(mu - 1.0) <= opt.trivial_tol) {
      std::ostringstream os;
      os << "floquet: second multiplier " << mu << " at 1, cycle not isolated";
      fail(ErrorKind::not_found, os.str());
    }
    if (!(std::abs(mu) < 1.0)) {
      std::ostringstream os;
      os << "floquet: multiplier " << mu << " is not inside the unit circle (cycle not isolated or unstable)";
      fail(ErrorKind::not_found, os.str());
    }
  }
  info.multipliers = mus;
  for (const Complex mu : mus) info.exponents.push_back(std::log(mu) / period);
  info.cycle_samples = parameterize_cycle(sys, x_on_cycle, period, opt.samples, opt.tol);
  return info;
}

/// settle -> find_period -> floquet, anchored at the settled state.
inline LimitCycleInfo analyze_limit_cycle(const DynSystem& sys, const Vec& x0, const LimitCycleOptions& opt = {}) {
  const Vec anchor = settle(sys, x0, opt.t_settle, opt.tol);
  const PeriodEstimate p = find_period(sys, anchor, std::nullopt, opt);
  return floquet(sys, anchor, p.period, opt);
}

}  // namespace koopman
