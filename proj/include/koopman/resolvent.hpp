#pragma once

// Laplace-domain view of an output y(t) = f(S^t x0): numerical transforms,
// the linear closed form, truncated pole/residue expansions, shifted-line
// spectra, and residues by contour quadrature.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "koopman/decompose.hpp"
#include "koopman/error.hpp"
#include "koopman/limit_cycle.hpp"
#include "koopman/modes.hpp"
#include "koopman/phase.hpp"
#include "koopman/pole_residue.hpp"
#include "koopman/signal.hpp"
#include "koopman/types.hpp"

namespace koopman {

struct LaplaceValue {
  CVec value;
  double bound = 0.0;  // tail estimate for the truncated integral
};

namespace detail {

inline CVec trapezoid_transform(const SampledSignal& y, Complex s, std::size_t intervals) {
  CVec acc = CVec::Zero(y.dim());
  for (std::size_t k = 0; k <= intervals; ++k) {
    const double w = (k == 0 || k == intervals) ? 0.5 : 1.0;
    acc += (w * std::exp(-s * (static_cast<double>(k) * y.dt))) * y.values[k];
  }
  return acc * y.dt;
}

inline std::size_t intervals_for(const SampledSignal& y, double t_max) {
  require(t_max > 0.0, "Laplace transform: T_max must be positive");
  if (t_max > y.span() * (1.0 + 1e-12) + 1e-9 * y.dt) {
    std::ostringstream os;
    os << "Laplace transform: T_max=" << t_max << " exceeds the data span " << y.span();
    fail(ErrorKind::invalid_argument, os.str());
  }
  return std::min(static_cast<std::size_t>(std::floor(t_max / y.dt + 1e-9)), y.size() - 1);
}

}  // namespace detail

/// Trapezoid quadrature of int_0^T_max e^{-s t} y(t) dt, time measured from the
/// first sample. Requires Re(s) > 0; the bound covers the discarded tail of a
/// bounded output.
inline LaplaceValue laplace_numeric(const SampledSignal& y, Complex s, double t_max) {
  y.validate();
  if (!(s.real() > 0.0)) {
    std::ostringstream os;
    os << "laplace_numeric: Re(s)=" << s.real() << " outside the region of convergence Re(s) > 0";
    fail(ErrorKind::roc_violation, os.str());
  }
  const std::size_t intervals = detail::intervals_for(y, t_max);
  require(intervals >= 1, "laplace_numeric: need at least one interval");
  const double t = static_cast<double>(intervals) * y.dt;
  return {detail::trapezoid_transform(y, s, intervals), y.max_abs() * std::exp(-s.real() * t) / s.real()};
}

/// c^T (sI - A)^{-1} x0.
inline Complex laplace_linear_analytic(const Mat& a, const Vec& c, const Vec& x0, Complex s) {
  require(a.rows() == a.cols(), "laplace_linear_analytic: A must be square");
  require(c.size() == a.rows() && x0.size() == a.rows(), "laplace_linear_analytic: dimension mismatch");
  const CMat m = s * CMat::Identity(a.rows(), a.cols()) - a.cast<Complex>();
  Eigen::FullPivLU<CMat> lu(m);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    std::ostringstream os;
    os << "laplace_linear_analytic: s=" << s << " is (numerically) an eigenvalue of A";
    fail(ErrorKind::numeric, os.str());
  }
  const CVec z = lu.solve(x0.cast<Complex>());
  return c.cast<Complex>().dot(z);  // dot conjugates the first argument; c is real
}

/// Poles (eigenvalues of A) and residues (w_j^T x0)(c^T v_j) of the linear
/// transfer c^T (sI - A)^{-1} x0 for diagonalizable A.
inline PoleResidueSet linear_expansion(const Mat& a, const Vec& c, const Vec& x0) {
  Eigen::EigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "linear_expansion: eigen-decomposition failed");
  const CMat v = es.eigenvectors();
  Eigen::FullPivLU<CMat> lu(v);
  if (!lu.isInvertible()) fail(ErrorKind::numeric, "linear_expansion: A is not diagonalizable");
  const CMat w = lu.inverse();  // rows are left eigenvectors
  PoleResidueSet out;
  double max_re = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    const Complex phi = (w.row(j) * x0.cast<Complex>())(0);
    const Complex mode = (c.cast<Complex>().transpose() * v.col(j))(0);
    CVec r(1);
    r[0] = phi * mode;
    out.add(es.eigenvalues()[j], r, ModeTag::equilibrium, {static_cast<int>(j)});
    max_re = std::max(max_re, es.eigenvalues()[j].real());
  }
  out.roc_abscissa = max_re;
  return out;
}

/// Laplace values along the shifted line s = sigma + i omega.
struct LaplaceGrid {
  std::vector<Complex> points;
  std::vector<CVec> values;
  double truncation_t = 0.0;
  std::vector<double> bounds;
};

inline LaplaceGrid fourier_spectrum(const SampledSignal& y, const std::vector<double>& omegas, double sigma,
                                    double t_max) {
  require(sigma > 0.0, "fourier_spectrum: sigma must be positive");
  LaplaceGrid g;
  g.truncation_t = static_cast<double>(detail::intervals_for(y, t_max)) * y.dt;
  for (const double w : omegas) {
    const Complex s(sigma, w);
    const LaplaceValue v = laplace_numeric(y, s, t_max);
    g.points.push_back(s);
    g.values.push_back(v.value);
    g.bounds.push_back(v.bound);
  }
  return g;
}

inline LaplaceGrid laplace_grid(const SampledSignal& y, const std::vector<Complex>& points, double t_max) {
  LaplaceGrid g;
  g.truncation_t = static_cast<double>(detail::intervals_for(y, t_max)) * y.dt;
  for (const Complex s : points) {
    const LaplaceValue v = laplace_numeric(y, s, t_max);
    g.points.push_back(s);
    g.values.push_back(v.value);
    g.bounds.push_back(v.bound);
  }
  return g;
}

/// Interior local maxima of |Y_component| along a grid, as Im(s), ordered by
/// prominence (height above the higher of the two flanking minima). Bumps
/// from interfering pole tails have little prominence and sort last.
inline std::vector<double> spectrum_peaks(const LaplaceGrid& g, int component, double rel_threshold = 1e-3) {
  const std::size_t n = g.values.size();
  std::vector<double> mag(n);
  for (std::size_t k = 0; k < n; ++k) mag[k] = std::abs(g.values[k][component]);
  const double top = n ? *std::max_element(mag.begin(), mag.end()) : 0.0;
  std::vector<std::pair<double, double>> peaks;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (!(mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])) continue;
    double left = mag[k], right = mag[k];
    for (std::size_t j = k; j-- > 0 && mag[j] <= mag[k];) left = std::min(left, mag[j]);
    for (std::size_t j = k + 1; j < n && mag[j] <= mag[k]; ++j) right = std::min(right, mag[j]);
    const double prominence = mag[k] - std::max(left, right);
    if (prominence >= rel_threshold * top) peaks.emplace_back(prominence, g.points[k].imag());
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::vector<double> out;
  for (const auto& p : peaks) out.push_back(p.second);
  return out;
}

/// (1 / 2 pi i) of the contour integral of Y over the circle |s - pole| = radius,
/// by the trapezoid rule on `points` nodes; checked against twice as many nodes.
inline CVec cauchy_residue(const std::function<CVec(Complex)>& y, Complex pole, double radius, int points = 64,
                           double rel_tol = 1e-8) {
  require(radius > 0.0, "cauchy_residue: radius must be positive");
  require(points >= 4, "cauchy_residue: need at least 4 nodes");
  const int fine = 2 * points;
  CVec coarse_sum, fine_sum;
  for (int k = 0; k < fine; ++k) {
    const Complex e = std::polar(1.0, kTwoPi * k / fine);
    const CVec term = y(pole + radius * e) * (radius * e);
    if (k == 0) {
      fine_sum = CVec::Zero(term.size());
      coarse_sum = CVec::Zero(term.size());
    }
    fine_sum += term;
    if (k % 2 == 0) coarse_sum += term;
  }
  const CVec fine_est = fine_sum / static_cast<double>(fine);
  const CVec coarse_est = coarse_sum / static_cast<double>(points);
  const double diff = (fine_est - coarse_est).norm();
  if (diff > rel_tol * std::max(fine_est.norm(), 1e-300) && diff > 1e-14) {
    std::ostringstream os;
    os << "cauchy_residue: no convergence under node doubling (change " << diff << ")";
    fail(ErrorKind::non_convergence, os.str());
  }
  return fine_est;
}

inline Complex cauchy_residue(const std::function<Complex(Complex)>& y, Complex pole, double radius, int points = 64,
                              double rel_tol = 1e-8) {
  return cauchy_residue(
      [&y](Complex s) {
        CVec v(1);
        v[0] = y(s);
        return v;
      },
      pole, radius, points, rel_tol)[0];
}

// ---------------------------------------------------------------------------
// Continuation across the imaginary axis for cycle-attracted outputs

/// Transform of a T-periodic output from samples of one period [0, T]:
/// int_0^T e^{-st} y dt / (1 - e^{-sT}), meromorphic with poles at i m Omega.
inline CVec laplace_periodic(const SampledSignal& one_period, Complex s) {
  one_period.validate();
  const double period = one_period.span();
  require(period > 0.0, "laplace_periodic: need at least two samples");
  const Complex denom = 1.0 - std::exp(-s * period);
  if (std::abs(denom) < 1e-12) fail(ErrorKind::invalid_argument, "laplace_periodic: s at a pole i m Omega");
  return detail::trapezoid_transform(one_period, s, one_period.size() - 1) / denom;
}

/// Truncated transform of an output decaying at least like e^{abscissa t};
/// valid for Re(s) > abscissa, which may be negative.
inline LaplaceValue laplace_transient(const SampledSignal& y, Complex s, double abscissa) {
  y.validate();
  if (!(s.real() > abscissa)) {
    std::ostringstream os;
    os << "laplace_transient: Re(s)=" << s.real() << " not above the decay abscissa " << abscissa;
    fail(ErrorKind::roc_violation, os.str());
  }
  const std::size_t intervals = y.size() - 1;
  const double t = static_cast<double>(intervals) * y.dt;
  double tail_amp = 0.0;
  for (std::size_t k = intervals - intervals / 10; k <= intervals; ++k) tail_amp = std::max(tail_amp, y.values[k].cwiseAbs().maxCoeff());
  return {detail::trapezoid_transform(y, s, intervals), tail_amp * std::exp(-s.real() * t) / (s.real() - abscissa)};
}

inline constexpr double kTransientFloor = 1e-9;

/// Y(s) = periodic part + transient part, built from a limit-cycle decomposition.
/// The result is analytic for Re(s) > nu except at the poles i m Omega.
inline std::function<CVec(Complex)> continued_transform(const Decomposition& dec, const Observable& obs, double period,
                                                        double abscissa, std::size_t points_per_period = 512) {
  SampledSignal one_period;
  one_period.dt = period / static_cast<double>(points_per_period);
  for (std::size_t k = 0; k <= points_per_period; ++k) {
    one_period.values.push_back(obs(dec.stationary.at(static_cast<double>(k) * one_period.dt)));
  }
  SampledSignal transient;
  transient.dt = dec.original.dt();
  double peak = 0.0;
  for (std::size_t k = 0; k < dec.original.size(); ++k) {
    transient.values.push_back(obs(dec.original.state(k)) - obs(dec.stationary.state(k)));
    peak = std::max(peak, transient.values.back().cwiseAbs().maxCoeff());
  }
  // Samples past the last one above the integration noise floor carry only
  // noise, which the continuation to Re(s) < 0 would amplify as e^{|Re s| t}.
  std::size_t keep = transient.values.size();
  while (keep > 2 && transient.values[keep - 1].cwiseAbs().maxCoeff() <= kTransientFloor * peak) --keep;
  transient.values.resize(keep);
  return [one_period = std::move(one_period), transient = std::move(transient), abscissa](Complex s) -> CVec {
    return laplace_periodic(one_period, s) + laplace_transient(transient, s, abscissa).value;
  };
}

// ---------------------------------------------------------------------------
// Limit-cycle expansion

using StationaryResidues = std::map<int, CVec>;                         // m -> phi_{0,m}(x0) V_{0,m}
using TransientResidues = std::map<std::pair<int, int>, CVec>;         // (k, m) -> phi_{k,m}(x0) V_{k,m}

/// GLA projections at i m Omega, |m| <= m_max, along the trajectory from x0.
inline StationaryResidues stationary_residues(const DynSystem& sys, const Vec& x0, const LimitCycleInfo& cycle,
                                              const Observable& obs, int m_max, const PhaseOptions& opt = {}) {
  require(m_max >= 0, "stationary_residues: m_max must be non-negative");
  const double dt = cycle.period / static_cast<double>(opt.points_per_period);
  const Trajectory tr = integrate(sys, x0, opt.periods * cycle.period, dt, opt.tol);
  const SampledSignal ys = sample_observable(tr, obs);
  StationaryResidues out;
  for (int m = -m_max; m <= m_max; ++m) out[m] = time_average(ys, Complex(0.0, m * cycle.omega), opt.method).value;
  return out;
}

/// Residues at k nu + i m Omega by least squares on the residual output with
/// the poles fixed by the Floquet data.
inline TransientResidues transient_residues(const SampledSignal& residual, const LimitCycleInfo& cycle, int k_max,
                                            int m_max) {
  require(k_max >= 1 && m_max >= 0, "transient_residues: need k_max >= 1 and m_max >= 0");
  const Complex nu = cycle.dominant_exponent();
  std::vector<Complex> poles;
  std::vector<std::pair<int, int>> keys;
  for (int k = 1; k <= k_max; ++k) {
    for (int m = -m_max; m <= m_max; ++m) {
      poles.push_back(static_cast<double>(k) * nu + Complex(0.0, m * cycle.omega));
      keys.emplace_back(k, m);
    }
  }
  const auto r = fit_residues(residual, poles);
  TransientResidues out;
  for (std::size_t q = 0; q < keys.size(); ++q) out[keys[q]] = r[q];
  return out;
}

/// Poles {i m Omega} and {k nu + i m Omega}, |m| <= m_max, 1 <= k <= k_max,
/// with their residues.
inline PoleResidueSet build_expansion_limit_cycle(const LimitCycleInfo& cycle, const StationaryResidues& stationary,
                                                  const TransientResidues& transient, int k_max, int m_max) {
  require(k_max >= 0 && m_max >= 0, "build_expansion_limit_cycle: truncation orders must be non-negative");
  PoleResidueSet out;
  out.roc_abscissa = 0.0;
  for (int m = -m_max; m <= m_max; ++m) {
    const auto it = stationary.find(m);
    if (it == stationary.end()) {
      fail(ErrorKind::invalid_argument, "build_expansion_limit_cycle: missing stationary residue m=" + std::to_string(m));
    }
    out.add(Complex(0.0, m * cycle.omega), it->second, ModeTag::stationary, {0, m});
  }
  if (k_max == 0) return out;
  const Complex nu = cycle.dominant_exponent();
  for (int k = 1; k <= k_max; ++k) {
    for (int m = -m_max; m <= m_max; ++m) {
      const auto it = transient.find({k, m});
      if (it == transient.end()) {
        fail(ErrorKind::invalid_argument, "build_expansion_limit_cycle: missing transient residue (k,m)=(" +
                                              std::to_string(k) + "," + std::to_string(m) + ")");
      }
      out.add(static_cast<double>(k) * nu + Complex(0.0, m * cycle.omega), it->second, ModeTag::nonstationary, {k, m});
    }
  }
  return out;
}

/// Share of signal energy reproduced by the expansion in the time domain,
/// 1 - sum |y - y_hat|^2 / sum |y|^2.
inline double explained_energy(const PoleResidueSet& prs, const SampledSignal& y) {
  y.validate();
  double err = 0.0, total = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const CVec model = expansion_time_value(prs, static_cast<double>(k) * y.dt);
    err += (model - y.values[k]).squaredNorm();
    total += y.values[k].squaredNorm();
  }
  return total > 0.0 ? 1.0 - err / total : 1.0;
}

/// Point-spectrum models explaining less than this share leave a continuous-spectrum part unaccounted for.
inline constexpr double kPointSpectrumEnergyThreshold = 0.95;

}  // namespace koopman
