#pragma once

// Data-driven Koopman eigenvalues and modes: exact DMD on (delay-embedded)
// snapshots and Prony linear-prediction fitting of exponential sums.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "koopman/error.hpp"
#include "koopman/pole_residue.hpp"
#include "koopman/signal.hpp"
#include "koopman/types.hpp"

namespace koopman {

struct SpectrumEstimate {
  std::vector<Complex> discrete_eigs;  // per-step multipliers
  std::vector<Complex> cont_eigs;      // log(discrete) / dt
  std::vector<CVec> modes;
  std::vector<Complex> amplitudes;
  double dt = 0.0;
  int rank = 0;
  double reconstruction_error = 0.0;  // relative Frobenius norm over all snapshots
  bool ill_conditioned = false;       // amplitude least-squares flagged
};

/// Continuous-time eigenvalue for a per-step multiplier (principal branch).
inline Complex continuous_eigenvalue(Complex z, double dt) {
  require(dt > 0.0, "continuous_eigenvalue: dt must be positive");
  if (std::abs(z) == 0.0) fail(ErrorKind::numeric, "continuous_eigenvalue: multiplier at 0 has no logarithm");
  if (std::abs(std::arg(z)) > kPi * (1.0 - 1e-9)) {
    std::ostringstream os;
    os << "continuous_eigenvalue: multiplier " << z << " sits at the Nyquist frequency pi/dt (aliased)";
    fail(ErrorKind::aliasing, os.str());
  }
  return std::log(z) / dt;
}

/// Hankel stacking of an m x N sample matrix into (m d) x (N - d + 1).
inline CMat delay_embed(const CMat& samples, int depth) {
  require(depth >= 1, "delay_embed: depth must be at least 1");
  const Eigen::Index m = samples.rows(), n = samples.cols();
  if (depth > n) {
    std::ostringstream os;
    os << "delay_embed: depth " << depth << " exceeds sample count " << n;
    fail(ErrorKind::invalid_argument, os.str());
  }
  const Eigen::Index cols = n - depth + 1;
  CMat out(m * depth, cols);
  for (int r = 0; r < depth; ++r) out.block(r * m, 0, m, cols) = samples.middleCols(r, cols);
  return out;
}

inline CMat delay_embed(std::span<const Complex> samples, int depth) {
  const CMat row = Eigen::Map<const CVec>(samples.data(), static_cast<Eigen::Index>(samples.size())).transpose();
  return delay_embed(row, depth);
}

/// Column matrix y(t_0), ..., y(t_N) of a sampled signal.
inline CMat snapshot_matrix(const SampledSignal& s) {
  s.validate();
  CMat out(s.dim(), static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = s.values[k];
  return out;
}

/// Exact DMD of snapshots y(t_0..t_N), rank-truncated at rank_tol * sigma_max.
/// Entries are ordered by decreasing |amplitude| * |mode|.
inline SpectrumEstimate dmd(const CMat& snapshots, double dt, double rank_tol = 1e-10) {
  require(snapshots.cols() >= 2, "dmd: need at least two snapshots");
  require(dt > 0.0, "dmd: dt must be positive");
  const Eigen::Index cols = snapshots.cols() - 1;
  const CMat x = snapshots.leftCols(cols);
  const CMat xp = snapshots.rightCols(cols);

  Eigen::BDCSVD<CMat> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) fail(ErrorKind::degenerate_fit, "dmd: snapshot matrix is zero (rank 0)");
  Eigen::Index r = 0;
  while (r < sv.size() && sv[r] > rank_tol * sv[0]) ++r;

  const CMat u = svd.matrixU().leftCols(r);
  const CMat v = svd.matrixV().leftCols(r);
  const Eigen::VectorXd s_inv = sv.head(r).cwiseInverse();
  const CMat xp_v_sinv = xp * v * s_inv.asDiagonal();
  const CMat a_tilde = u.adjoint() * xp_v_sinv;

  Eigen::ComplexEigenSolver<CMat> es(a_tilde);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "dmd: eigen-decomposition failed");
  CMat phi = xp_v_sinv * es.eigenvectors();
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    const double nrm = phi.col(j).norm();
    if (nrm > 0.0) phi.col(j) /= nrm;
  }

  Eigen::BDCSVD<CMat> psvd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const CVec b = psvd.solve(CVec(snapshots.col(0)));
  const auto& ps = psvd.singularValues();

  SpectrumEstimate est;
  est.dt = dt;
  est.rank = static_cast<int>(r);
  est.ill_conditioned = ps.size() == 0 || ps[ps.size() - 1] < 1e-12 * ps[0];

  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
    return std::abs(b[a]) > std::abs(b[c]);
  });
  for (const Eigen::Index j : order) {
    const Complex z = es.eigenvalues()[j];
    est.discrete_eigs.push_back(z);
    est.cont_eigs.push_back(continuous_eigenvalue(z, dt));
    est.modes.push_back(phi.col(j));
    est.amplitudes.push_back(b[j]);
  }

  // Reconstruction y_k = sum_j b_j phi_j z_j^k.
  double err2 = 0.0;
  std::vector<Complex> powers(est.amplitudes);
  for (Eigen::Index k = 0; k < snapshots.cols(); ++k) {
    CVec y = CVec::Zero(snapshots.rows());
    for (std::size_t j = 0; j < powers.size(); ++j) {
      y += powers[j] * est.modes[j];
      powers[j] *= est.discrete_eigs[j];
    }
    err2 += (y - snapshots.col(k)).squaredNorm();
  }
  est.reconstruction_error = std::sqrt(err2) / snapshots.norm();
  return est;
}

/// Least-squares residues r_k of y(t_n) = sum_k r_k exp(pole_k n dt) for known poles.
inline std::vector<CVec> fit_residues(const SampledSignal& s, std::span<const Complex> poles) {
  s.validate();
  require(!poles.empty(), "fit_residues: no poles");
  require(s.size() >= poles.size(), "fit_residues: fewer samples than poles");
  const Eigen::Index n = static_cast<Eigen::Index>(s.size());
  const Eigen::Index p = static_cast<Eigen::Index>(poles.size());
  CMat v(n, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) v(i, k) = std::exp(poles[k] * (static_cast<double>(i) * s.dt));
  }
  const CMat y = snapshot_matrix(s).transpose();  // n x m
  const CMat r = v.colPivHouseholderQr().solve(y);  // p x m
  std::vector<CVec> out;
  for (Eigen::Index k = 0; k < p; ++k) out.push_back(r.row(k).transpose());
  return out;
}

struct PronyOptions {
  double rank_tol = 1e-12;  // relative singular value below which the Hankel matrix counts as rank-deficient
  double stationary_tol = 1e-9;
  int pencil_depth = 0;     // Hankel window length; 0 picks N / 2
};

/// Prony analysis of y_n = sum_k r_k z_k^n. The per-step poles z_k are the
/// eigenvalues of the shift map on the rank-p signal subspace of the Hankel
/// matrix (equivalently, roots of the order-p prediction polynomial);
/// residues follow from Vandermonde least squares.
inline PoleResidueSet prony(std::span<const Complex> y, double dt, int order, const PronyOptions& opt = {}) {
  require(order >= 1, "prony: order must be at least 1");
  require(dt > 0.0, "prony: dt must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(y.size());
  const Eigen::Index p = order;
  if (n < 2 * p) {
    std::ostringstream os;
    os << "prony: need at least 2p = " << 2 * p << " samples, got " << n;
    fail(ErrorKind::invalid_argument, os.str());
  }
  Eigen::Index depth = opt.pencil_depth > 0 ? opt.pencil_depth : n / 2;
  depth = std::clamp<Eigen::Index>(depth, p, n - p);

  const Eigen::Index rows = n - depth;
  CMat h(rows, depth + 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c <= depth; ++c) h(r, c) = y[static_cast<std::size_t>(r + c)];
  }
  Eigen::BDCSVD<CMat> svd(h, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[0] == 0.0) fail(ErrorKind::degenerate_fit, "prony: signal is identically zero");
  if (sv.size() < p || sv[p - 1] < opt.rank_tol * sv[0]) {
    std::ostringstream os;
    os << "prony: order " << order << " too large, Hankel matrix rank-deficient (sigma_p/sigma_max = "
       << (sv.size() < p ? 0.0 : sv[p - 1] / sv[0]) << ")";
    fail(ErrorKind::degenerate_fit, os.str());
  }
  // Rows of h are combinations of (1, z_k, ..., z_k^depth), so the conjugated
  // leading right singular vectors span the same space.
  const CMat w = svd.matrixV().leftCols(p).conjugate();
  const CMat shift = w.topRows(depth).completeOrthogonalDecomposition().solve(w.bottomRows(depth));
  Eigen::ComplexEigenSolver<CMat> es(shift, false);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "prony: pole extraction failed");

  std::vector<Complex> poles;
  for (Eigen::Index k = 0; k < p; ++k) {
    const Complex z = es.eigenvalues()[k];
    if (std::abs(z) < 1e-300) fail(ErrorKind::numeric, "prony: per-step pole at 0");
    poles.push_back(continuous_eigenvalue(z, dt));
  }
  const auto residues = fit_residues(scalar_signal(std::vector<Complex>(y.begin(), y.end()), dt), poles);

  PoleResidueSet out;
  double max_re = 0.0;
  for (std::size_t k = 0; k < poles.size(); ++k) {
    const bool stationary = std::abs(poles[k].real()) <= opt.stationary_tol * std::max(1.0, std::abs(poles[k]));
    out.add(poles[k], residues[k], stationary ? ModeTag::stationary : ModeTag::nonstationary);
    max_re = std::max(max_re, poles[k].real());
  }
  out.roc_abscissa = max_re;
  return out;
}

struct PronySweepEntry {
  int order = 0;
  bool ok = false;
  std::vector<Complex> poles;
  std::string message;
};

/// Prony over a range of orders, for judging pole stability across p.
inline std::vector<PronySweepEntry> prony_sweep(std::span<const Complex> y, double dt, int min_order, int max_order,
                                                const PronyOptions& opt = {}) {
  require(min_order >= 1 && max_order >= min_order, "prony_sweep: invalid order range");
  std::vector<PronySweepEntry> out;
  for (int p = min_order; p <= max_order; ++p) {
    PronySweepEntry e;
    e.order = p;
    try {
      const auto prs = prony(y, dt, p, opt);
      for (const auto& t : prs.entries) e.poles.push_back(t.pole);
      e.ok = true;
    } catch (const Error& err) {
      e.message = err.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace koopman
