#pragma once

// Autonomous vector fields, observables, and an adaptive Dormand-Prince 5(4)
// integrator with continuous output. Trajectories are resampled onto uniform
// grids for the spectral post-processing downstream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "koopman/error.hpp"
#include "koopman/types.hpp"

namespace koopman {

enum class JacobianSource { analytic, finite_difference, absent };

inline const char* to_string(JacobianSource s) {
  switch (s) {
    case JacobianSource::analytic: return "analytic";
    case JacobianSource::finite_difference: return "finite_difference";
    case JacobianSource::absent: return "absent";
  }
  return "unknown";
}

/// Autonomous system x' = F(x) on R^n with an optional Jacobian DF(x).
class DynSystem {
 public:
  using Field = std::function<Vec(const Vec&)>;
  using Jacobian = std::function<Mat(const Vec&)>;

  DynSystem(int n, Field field, Jacobian jacobian, std::string name,
            JacobianSource source = JacobianSource::analytic)
      : n_(n), field_(std::move(field)), jacobian_(std::move(jacobian)), name_(std::move(name)),
        source_(jacobian_ ? source : JacobianSource::absent) {
    require(n_ > 0, "DynSystem: state dimension must be positive");
    require(static_cast<bool>(field_), "DynSystem: vector field is required");
  }

  int dim() const noexcept { return n_; }
  const std::string& name() const noexcept { return name_; }
  JacobianSource jacobian_source() const noexcept { return source_; }
  bool has_jacobian() const noexcept { return source_ != JacobianSource::absent; }

  Vec field(const Vec& x) const {
    check_input(x);
    Vec f = field_(x);
    if (f.size() != n_) fail(ErrorKind::invalid_argument, name_ + ": field returned wrong dimension");
    return f;
  }

  Mat jacobian(const Vec& x) const {
    if (!has_jacobian()) fail(ErrorKind::invalid_argument, name_ + ": system has no Jacobian");
    check_input(x);
    Mat j = jacobian_(x);
    if (j.rows() != n_ || j.cols() != n_) {
      fail(ErrorKind::invalid_argument, name_ + ": Jacobian returned wrong shape");
    }
    return j;
  }

 private:
  void check_input(const Vec& x) const {
    if (x.size() != n_) {
      std::ostringstream os;
      os << name_ << ": expected state of dimension " << n_ << ", got " << x.size();
      fail(ErrorKind::invalid_argument, os.str());
    }
  }

  int n_;
  Field field_;
  Jacobian jacobian_;
  std::string name_;
  JacobianSource source_;
};

/// Central-difference Jacobian of a field. Step scales with |x_i|.
inline Mat finite_difference_jacobian(const DynSystem::Field& field, const Vec& x) {
  const Eigen::Index n = x.size();
  Mat j(n, n);
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  Vec xp = x;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double h = base * std::max(1.0, std::abs(x[c]));
    xp[c] = x[c] + h;
    const Vec fp = field(xp);
    xp[c] = x[c] - h;
    const Vec fm = field(xp);
    xp[c] = x[c];
    j.col(c) = (fp - fm) / (2.0 * h);
  }
  return j;
}

/// Same system with its Jacobian replaced by central finite differences.
inline DynSystem with_finite_difference_jacobian(int n, DynSystem::Field field, std::string name) {
  auto jac = [field](const Vec& x) { return finite_difference_jacobian(field, x); };
  return DynSystem(n, std::move(field), std::move(jac), std::move(name),
                   JacobianSource::finite_difference);
}

// ---------------------------------------------------------------------------
// Built-in systems

inline DynSystem builtin_linear(const Mat& a) {
  require(a.rows() == a.cols() && a.rows() > 0, "builtin_linear: matrix must be square and non-empty");
  return DynSystem(
      static_cast<int>(a.rows()), [a](const Vec& x) -> Vec { return a * x; },
      [a](const Vec&) -> Mat { return a; }, "linear");
}

/// x1' = x2, x2' = eps (1 - x1^2) x2 - x1.
inline DynSystem builtin_vdp(double eps) {
  auto field = [eps](const Vec& x) -> Vec {
    Vec f(2);
    f << x[1], eps * (1.0 - x[0] * x[0]) * x[1] - x[0];
    return f;
  };
  auto jac = [eps](const Vec& x) -> Mat {
    Mat j(2, 2);
    j << 0.0, 1.0, -2.0 * eps * x[0] * x[1] - 1.0, eps * (1.0 - x[0] * x[0]);
    return j;
  };
  return DynSystem(2, field, jac, "vdp");
}

/// Two van der Pol oscillators with diffusive position coupling, state (x1, x2, y1, y2).
inline DynSystem builtin_coupled_vdp(double eps, double kx, double ky, double kc) {
  auto field = [=](const Vec& s) -> Vec {
    const double x1 = s[0], x2 = s[1], y1 = s[2], y2 = s[3];
    Vec f(4);
    f << x2, eps * (1.0 - x1 * x1) * x2 - kx * x1 + kc * (y1 - x1), y2,
        eps * (1.0 - y1 * y1) * y2 - ky * y1 + kc * (x1 - y1);
    return f;
  };
  auto jac = [=](const Vec& s) -> Mat {
    const double x1 = s[0], x2 = s[1], y1 = s[2], y2 = s[3];
    Mat j = Mat::Zero(4, 4);
    j(0, 1) = 1.0;
    j(1, 0) = -2.0 * eps * x1 * x2 - kx - kc;
    j(1, 1) = eps * (1.0 - x1 * x1);
    j(1, 2) = kc;
    j(2, 3) = 1.0;
    j(3, 0) = kc;
    j(3, 2) = -2.0 * eps * y1 * y2 - ky - kc;
    j(3, 3) = eps * (1.0 - y1 * y1);
    return j;
  };
  return DynSystem(4, field, jac, "coupled_vdp");
}

/// x1' = l1 x1, x2' = l2 x2 + x1^2: a stable node whose Koopman eigenfunctions
/// are x1 (eigenvalue l1) and x2 - x1^2 / (2 l1 - l2) (eigenvalue l2).
inline DynSystem builtin_quadratic_node(double l1 = -1.0, double l2 = -3.0) {
  require(2.0 * l1 != l2, "builtin_quadratic_node: resonant eigenvalues 2*l1 == l2");
  auto field = [=](const Vec& x) -> Vec {
    Vec f(2);
    f << l1 * x[0], l2 * x[1] + x[0] * x[0];
    return f;
  };
  auto jac = [=](const Vec& x) -> Mat {
    Mat j(2, 2);
    j << l1, 0.0, 2.0 * x[0], l2;
    return j;
  };
  return DynSystem(2, field, jac, "quadratic_node");
}

// ---------------------------------------------------------------------------
// Observables

/// Output map f: R^n -> C^m.
struct Observable {
  int m = 1;
  std::function<CVec(const Vec&)> eval;
  std::string label;

  CVec operator()(const Vec& x) const {
    CVec y = eval(x);
    if (y.size() != m) fail(ErrorKind::invalid_argument, "observable '" + label + "' returned wrong dimension");
    return y;
  }
};

inline Observable state_component(int i) {
  require(i >= 0, "state_component: negative index");
  return Observable{1,
                    [i](const Vec& x) -> CVec {
                      require(i < x.size(), "state_component: index beyond state dimension");
                      CVec y(1);
                      y[0] = x[i];
                      return y;
                    },
                    "x" + std::to_string(i + 1)};
}

inline Observable full_state(int n) {
  return Observable{n, [](const Vec& x) -> CVec { return x.cast<Complex>(); }, "state"};
}

inline Observable linear_observable(const Vec& c) {
  return Observable{1,
                    [c](const Vec& x) -> CVec {
                      CVec y(1);
                      y[0] = c.dot(x);
                      return y;
                    },
                    "linear"};
}

inline Observable component_set(std::vector<int> indices) {
  const int m = static_cast<int>(indices.size());
  require(m > 0, "component_set: empty index list");
  std::string label;
  for (int i : indices) label += (label.empty() ? "x" : ",x") + std::to_string(i + 1);
  return Observable{m,
                    [indices](const Vec& x) -> CVec {
                      CVec y(static_cast<Eigen::Index>(indices.size()));
                      for (std::size_t k = 0; k < indices.size(); ++k) y[k] = x[indices[k]];
                      return y;
                    },
                    label};
}

// ---------------------------------------------------------------------------
// Continuous output

/// Piecewise quartic interpolant produced by the Dormand-Prince continuous
/// extension. Segments are stored contiguously, five coefficient vectors each.
class DenseOutput {
 public:
  explicit DenseOutput(int n) : n_(n) {}

  int dim() const noexcept { return n_; }
  std::size_t segments() const noexcept { return starts_.size(); }
  bool empty() const noexcept { return starts_.empty(); }
  double t_begin() const { return starts_.front(); }
  double t_end() const { return starts_.back() + steps_.back(); }

  void append(double t, double h, const Vec* coeffs) {
    starts_.push_back(t);
    steps_.push_back(h);
    for (int c = 0; c < 5; ++c) data_.insert(data_.end(), coeffs[c].data(), coeffs[c].data() + n_);
  }

  Vec operator()(double t) const {
    if (empty()) fail(ErrorKind::invalid_argument, "DenseOutput: no segments");
    const double span = t_end() - t_begin();
    const double slack = 1e-12 * std::max(1.0, std::abs(span));
    if (t < t_begin() - slack || t > t_end() + slack) {
      std::ostringstream os;
      os << "DenseOutput: t=" << t << " outside [" << t_begin() << ", " << t_end() << "]";
      fail(ErrorKind::invalid_argument, os.str());
    }
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    std::size_t seg = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
    const double theta = std::clamp((t - starts_[seg]) / steps_[seg], 0.0, 1.0);
    const double theta1 = 1.0 - theta;
    const double* base = data_.data() + seg * 5 * static_cast<std::size_t>(n_);
    Vec y(n_);
    for (int i = 0; i < n_; ++i) {
      const double r1 = base[i], r2 = base[n_ + i], r3 = base[2 * n_ + i], r4 = base[3 * n_ + i],
                   r5 = base[4 * n_ + i];
      y[i] = r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
    }
    return y;
  }

 private:
  int n_;
  std::vector<double> starts_;
  std::vector<double> steps_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Trajectory

/// Uniformly sampled flow output, optionally backed by a continuous interpolant.
class Trajectory {
 public:
  Trajectory(double t0, double dt, std::vector<Vec> states, std::shared_ptr<const DenseOutput> dense = nullptr)
      : t0_(t0), dt_(dt), states_(std::move(states)), dense_(std::move(dense)) {
    require(dt_ > 0.0 && std::isfinite(dt_), "Trajectory: dt must be positive");
    require(!states_.empty(), "Trajectory: no samples");
    n_ = static_cast<int>(states_.front().size());
    require(n_ > 0, "Trajectory: zero-dimensional states");
    for (const auto& s : states_) require(s.size() == n_, "Trajectory: inconsistent state dimension");
  }

  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  int dim() const noexcept { return n_; }
  std::size_t size() const noexcept { return states_.size(); }
  double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
  double t_end() const noexcept { return time(states_.size() - 1); }
  const Vec& state(std::size_t k) const { return states_.at(k); }
  const Vec& back() const { return states_.back(); }
  const std::vector<Vec>& states() const noexcept { return states_; }
  bool has_dense() const noexcept { return static_cast<bool>(dense_); }
  const std::shared_ptr<const DenseOutput>& dense() const noexcept { return dense_; }

  Vec component(int i) const {
    require(i >= 0 && i < n_, "Trajectory::component: index out of range");
    Vec c(static_cast<Eigen::Index>(states_.size()));
    for (std::size_t k = 0; k < states_.size(); ++k) c[static_cast<Eigen::Index>(k)] = states_[k][i];
    return c;
  }

  /// State at arbitrary t: continuous output when present, cubic Lagrange
  /// interpolation on the grid otherwise.
  Vec at(double t) const {
    if (dense_) return (*dense_)(t);
    const double u = (t - t0_) / dt_;
    const double last = static_cast<double>(states_.size() - 1);
    if (u < -1e-9 || u > last + 1e-9) fail(ErrorKind::invalid_argument, "Trajectory::at: t outside sampled range");
    if (states_.size() < 4) {
      const std::size_t k = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(u))), states_.size() - 1);
      if (k + 1 >= states_.size()) return states_[k];
      const double w = u - static_cast<double>(k);
      return (1.0 - w) * states_[k] + w * states_[k + 1];
    }
    long k0 = static_cast<long>(std::floor(u)) - 1;
    k0 = std::clamp(k0, 0L, static_cast<long>(states_.size()) - 4);
    Vec y = Vec::Zero(n_);
    for (int a = 0; a < 4; ++a) {
      double w = 1.0;
      for (int b = 0; b < 4; ++b) {
        if (a != b) w *= (u - static_cast<double>(k0 + b)) / static_cast<double>(a - b);
      }
      y += w * states_[static_cast<std::size_t>(k0 + a)];
    }
    return y;
  }

 private:
  double t0_;
  double dt_;
  int n_ = 0;
  std::vector<Vec> states_;
  std::shared_ptr<const DenseOutput> dense_;
};

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

struct IntegratorOptions {
  double tol = 1e-9;  // absolute and relative
  double h_init = 0.0;
  double h_max = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 100'000'000;
};

namespace detail {

/// One accepted step with its continuous-extension coefficients.
struct StepView {
  double t;
  double h;
  const Vec* coeffs;  // five vectors

  Vec eval(double tq) const {
    const double theta = std::clamp((tq - t) / h, 0.0, 1.0);
    const double theta1 = 1.0 - theta;
    return coeffs[0] + theta * (coeffs[1] + theta1 * (coeffs[2] + theta * (coeffs[3] + theta1 * coeffs[4])));
  }
  Vec start() const { return coeffs[0]; }
  Vec end() const { return coeffs[0] + coeffs[1]; }
};

inline double scaled_rms(const Vec& e, const Vec& ya, const Vec& yb, double atol, double rtol) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
    const double r = e[i] / sc;
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(e.size()));
}

/// Integrates y' = rhs(y) from t0 to t_end. on_step(StepView) is called after
/// every accepted step and returns false to stop early.
template <class Rhs, class OnStep>
void dopri5(Rhs&& rhs, const Vec& y_init, double t0, double t_end, const IntegratorOptions& opt, OnStep&& on_step) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                   a76 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                   d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                   d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
  (void)c2, (void)c3, (void)c4, (void)c5;

  require(opt.tol > 0.0, "integrator: tol must be positive");
  if (!(t_end > t0)) return;
  const double atol = opt.tol, rtol = opt.tol;

  Vec y = y_init;
  if (!y.allFinite()) fail(ErrorKind::numeric, "integrator: non-finite initial state");
  double t = t0;
  Vec k1 = rhs(y);

  double h = opt.h_init;
  if (!(h > 0.0)) {
    const double d0 = scaled_rms(y, y, y, atol, rtol);
    const double d1n = scaled_rms(k1, y, y, atol, rtol);
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h0 = std::min(h0, t_end - t0);
    const Vec y1 = y + h0 * k1;
    const Vec f1 = rhs(y1);
    const double d2 = scaled_rms(f1 - k1, y, y, atol, rtol) / h0;
    const double dm = std::max(d1n, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min({h, opt.h_max, t_end - t0});

  Vec cont[5];
  bool last_rejected = false;
  for (std::size_t step = 0;; ++step) {
    if (step >= opt.max_steps) {
      std::ostringstream os;
      os << "integrator: step budget exhausted at t=" << t;
      fail(ErrorKind::numeric, os.str());
    }
    const double h_min = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < h_min) {
      std::ostringstream os;
      os << "integrator: step size underflow at t=" << t << " (stiff or singular dynamics)";
      fail(ErrorKind::numeric, os.str());
    }
    bool last = false;
    if (t + h >= t_end) {
      h = t_end - t;
      last = true;
    }

    const Vec k2 = rhs(Vec(y + h * (a21 * k1)));
    const Vec k3 = rhs(Vec(y + h * (a31 * k1 + a32 * k2)));
    const Vec k4 = rhs(Vec(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const Vec k5 = rhs(Vec(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const Vec k6 = rhs(Vec(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    const Vec y_new = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    const Vec k7 = rhs(y_new);
    const Vec err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double err = scaled_rms(err_vec, y, y_new, atol, rtol);

    if (!std::isfinite(err) || !y_new.allFinite() || y_new.lpNorm<Eigen::Infinity>() > 1e150) {
      h *= 0.2;
      last_rejected = true;
      if (h < h_min) {
        std::ostringstream os;
        os << "integrator: divergence (non-finite state); last valid t=" << t;
        fail(ErrorKind::numeric, os.str());
      }
      continue;
    }

    if (err <= 1.0) {
      const Vec ydiff = y_new - y;
      const Vec bspl = h * k1 - ydiff;
      cont[0] = y;
      cont[1] = ydiff;
      cont[2] = bspl;
      cont[3] = ydiff - h * k7 - bspl;
      cont[4] = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      const bool keep_going = on_step(StepView{t, h, cont});
      y = y_new;
      k1 = k7;
      t = last ? t_end : t + h;
      if (!keep_going || last) return;
      double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      h = std::min(h * fac, opt.h_max);
      last_rejected = false;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      last_rejected = true;
    }
  }
}

inline std::size_t grid_count(double t_end, double dt) {
  return static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
}

/// Appends the grid samples k*dt that fall inside the step. The grid end may
/// exceed the step end by rounding only, in which case theta clamps to 1.
template <class Project>
void resample(const StepView& sv, double dt, std::size_t last, std::vector<Vec>& samples, Project&& project) {
  const double t_next = sv.t + sv.h;
  while (samples.size() <= last) {
    const double tk = static_cast<double>(samples.size()) * dt;
    if (tk > t_next + 1e-9 * dt) break;
    samples.push_back(project(sv.eval(tk)));
  }
}

}  // namespace detail

/// Samples S^t(x0) at t = 0, dt, 2dt, ... up to t_end. With keep_dense the
/// continuous interpolant is retained for evaluation at arbitrary times.
inline Trajectory integrate(const DynSystem& sys, const Vec& x0, double t_end, double dt, double tol = 1e-9,
                            bool keep_dense = false) {
  require(t_end > 0.0, "integrate: t_end must be positive");
  require(dt > 0.0, "integrate: dt must be positive");
  require(tol > 0.0, "integrate: tol must be positive");
  require(x0.size() == sys.dim(), "integrate: x0 has wrong dimension");

  const std::size_t last = detail::grid_count(t_end, dt);
  std::vector<Vec> samples;
  samples.reserve(last + 1);
  samples.push_back(x0);
  std::shared_ptr<DenseOutput> dense = keep_dense ? std::make_shared<DenseOutput>(sys.dim()) : nullptr;

  IntegratorOptions opt;
  opt.tol = tol;
  auto rhs = [&sys](const Vec& y) { return sys.field(y); };
  detail::dopri5(rhs, x0, 0.0, t_end, opt, [&](const detail::StepView& sv) {
    detail::resample(sv, dt, last, samples, [](const Vec& y) { return y; });
    if (dense) dense->append(sv.t, sv.h, sv.coeffs);
    return true;
  });
  return Trajectory(0.0, dt, std::move(samples), dense);
}

/// Continuous solution over [0, t_end].
inline std::shared_ptr<const DenseOutput> flow_dense(const DynSystem& sys, const Vec& x0, double t_end,
                                                     double tol = 1e-9) {
  require(t_end > 0.0, "flow_dense: t_end must be positive");
  require(x0.size() == sys.dim(), "flow_dense: x0 has wrong dimension");
  auto dense = std::make_shared<DenseOutput>(sys.dim());
  IntegratorOptions opt;
  opt.tol = tol;
  detail::dopri5([&sys](const Vec& y) { return sys.field(y); }, x0, 0.0, t_end, opt,
                 [&](const detail::StepView& sv) {
                   dense->append(sv.t, sv.h, sv.coeffs);
                   return true;
                 });
  return dense;
}

/// S^t(x0).
inline Vec flow(const DynSystem& sys, const Vec& x0, double t, double tol = 1e-9) {
  require(t >= 0.0, "flow: negative time");
  require(x0.size() == sys.dim(), "flow: x0 has wrong dimension");
  if (t == 0.0) return x0;
  Vec end = x0;
  IntegratorOptions opt;
  opt.tol = tol;
  detail::dopri5([&sys](const Vec& y) { return sys.field(y); }, x0, 0.0, t, opt,
                 [&](const detail::StepView& sv) {
                   end = sv.end();
                   return true;
                 });
  return end;
}

struct VariationalFlow {
  Trajectory trajectory;
  Mat phi;  // dS^t(x0)/dx0 at t_end
};

/// Integrates the state together with Phi' = DF(x) Phi, Phi(0) = I.
inline VariationalFlow integrate_variational(const DynSystem& sys, const Vec& x0, double t_end, double tol = 1e-9,
                                             double dt = 0.0) {
  if (!sys.has_jacobian()) fail(ErrorKind::invalid_argument, "integrate_variational: system has no Jacobian");
  require(t_end >= 0.0, "integrate_variational: t_end must be non-negative");
  require(x0.size() == sys.dim(), "integrate_variational: x0 has wrong dimension");
  const int n = sys.dim();
  if (t_end == 0.0) {
    return VariationalFlow{Trajectory(0.0, dt > 0.0 ? dt : 1.0, {x0}), Mat::Identity(n, n)};
  }
  if (!(dt > 0.0)) dt = t_end / 512.0;

  Vec y0(n + n * n);
  y0.head(n) = x0;
  y0.tail(n * n) = Eigen::Map<const Vec>(Mat::Identity(n, n).eval().data(), n * n);

  auto rhs = [&sys, n](const Vec& y) -> Vec {
    const Vec x = y.head(n);
    Vec dy(y.size());
    dy.head(n) = sys.field(x);
    const Eigen::Map<const Mat> phi(y.data() + n, n, n);
    Eigen::Map<Mat>(dy.data() + n, n, n) = sys.jacobian(x) * phi;
    return dy;
  };

  const std::size_t last = detail::grid_count(t_end, dt);
  std::vector<Vec> samples;
  samples.reserve(last + 1);
  samples.push_back(x0);
  Vec y_end = y0;
  IntegratorOptions opt;
  opt.tol = tol;
  detail::dopri5(rhs, y0, 0.0, t_end, opt, [&](const detail::StepView& sv) {
    detail::resample(sv, dt, last, samples, [n](const Vec& y) -> Vec { return y.head(n); });
    y_end = sv.end();
    return true;
  });
  Mat phi = Eigen::Map<const Mat>(y_end.data() + n, n, n);
  return VariationalFlow{Trajectory(0.0, dt, std::move(samples)), phi};
}

}  // namespace koopman
