// End-to-end acceptance checks. One PASS/FAIL line per criterion, each with its
// wall-clock budget; the exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "koopman/decompose.hpp"
#include "koopman/limit_cycle.hpp"
#include "koopman/modes.hpp"
#include "koopman/phase.hpp"
#include "koopman/resolvent.hpp"

using namespace koopman;

namespace {

struct Verdict {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

const LimitCycleInfo& vdp_cycle() {
  static const LimitCycleInfo info = analyze_limit_cycle(builtin_vdp(0.3), vec({3.0, 0.0}));
  return info;
}

void limit_cycle_frequency(Verdict& v) {
  const auto& c = vdp_cycle();
  const double nu = c.dominant_exponent().real();
  v.detail << "Omega=" << c.omega << " nu=" << nu;
  v.expect(std::abs(c.omega - 0.995) <= 0.005, "Omega in 0.995 +- 0.005");
  v.expect(std::abs(nu + 0.301) <= 0.005, "nu in -0.301 +- 0.005");
}

void residual_decay_rate(Verdict& v) {
  const auto& c = vdp_cycle();
  const Decomposition d = decompose(builtin_vdp(0.3), vec({3.0, 0.0}), c, 100.0, 0.01);
  const DecayFit fit = decay_rate(d, 0, c.period);
  v.detail << "nu_hat=" << fit.rate << " r2=" << fit.r2;
  v.expect(std::abs(fit.rate + 0.301) <= 0.015, "nu_hat in -0.301 +- 0.015");
  v.expect(fit.r2 > 0.99, "r2 > 0.99");
}

void torus_synchronization(Verdict& v) {
  const auto sys = builtin_coupled_vdp(0.3, 1.0, 3.0, 0.5);
  const Vec x0 = vec({3, 3, 3, 3});
  const TorusInfo torus = characterize_torus(sys, x0, full_state(4));
  const Decomposition d = decompose(sys, x0, torus, 200.0, 0.01);
  const double initial = d.residual.state(0).cwiseAbs().maxCoeff();
  double tail = 0.0;
  for (std::size_t k = d.residual.size() - d.residual.size() / 10; k < d.residual.size(); ++k) {
    tail = std::max(tail, d.residual.state(k).cwiseAbs().maxCoeff());
  }
  v.detail << "omegas=(" << torus.omegas[0] << "," << torus.omegas[1] << ") tail/initial=" << tail / initial;
  v.expect(tail < 0.02 * initial, "final-10% residual sup below 2% of the initial residual");
}

void linear_transforms(Verdict& v) {
  struct Case {
    Mat a;
    Vec c, x0;
  };
  const std::vector<Case> cases{
      {mat2(-1.0, 2.0, -2.0, -1.0), vec({1.0, 0.0}), vec({1.0, 0.5})},   // stable spiral
      {mat2(-1.0, 0.0, 0.0, -2.0), vec({1.0, 1.0}), vec({1.0, 1.0})},    // node
      {mat2(-0.5, 1.0, 0.0, -0.5), vec({1.0, -1.0}), vec({0.3, 1.0})},   // Jordan block
  };
  const double dt = 5e-4, t_max = 30.0;
  double worst_excess = -1e300;
  for (const auto& lc : cases) {
    const auto y = sample_observable(integrate(builtin_linear(lc.a), lc.x0, t_max, dt, 1e-12), linear_observable(lc.c));
    int count = 0;
    for (const double re : {0.5, 1.0, 1.5, 2.0, 3.0}) {
      for (int k = 0; k < 10; ++k) {
        const Complex s(re, -4.0 + 8.0 * k / 9.0);
        // c^T (sI - A)^{-1} x0 through the 2x2 adjugate
        const Complex m00 = s - lc.a(0, 0), m01 = -lc.a(0, 1), m10 = -lc.a(1, 0), m11 = s - lc.a(1, 1);
        const Complex det = m00 * m11 - m01 * m10;
        const Complex r0 = (m11 * lc.x0[0] - m01 * lc.x0[1]) / det;
        const Complex r1 = (-m10 * lc.x0[0] + m00 * lc.x0[1]) / det;
        const Complex analytic = lc.c[0] * r0 + lc.c[1] * r1;
        const LaplaceValue num = laplace_numeric(y, s, t_max);
        const double err = std::abs(num.value[0] - analytic);
        worst_excess = std::max(worst_excess, err - num.bound - 1e-6);
        v.expect(err <= num.bound + 1e-6, "|numeric - analytic| <= bound + 1e-6");
        ++count;
      }
    }
    v.expect(count == 50, "50 grid points");
  }
  v.detail << "max(err - bound - 1e-6)=" << worst_excess;
}

void quadratic_node(Verdict& v) {
  const auto sys = builtin_quadratic_node();
  const Vec x0 = vec({1.0, 2.0});
  const double dt = 1e-3, t_max = 30.0;
  const auto y = sample_observable(integrate(sys, x0, t_max, dt, 1e-12), state_component(1));
  std::vector<Complex> coarse;
  for (std::size_t k = 0; k < y.size() && coarse.size() < 400; k += 10) coarse.push_back(y.values[k][0]);
  PoleResidueSet prs = prony(coarse, 10 * dt, 2);
  std::vector<Complex> poles;
  for (const auto& e : prs.entries) poles.push_back(e.pole);
  std::sort(poles.begin(), poles.end(), [](Complex a, Complex b) { return a.real() < b.real(); });
  v.detail << "poles=" << poles[0] << "," << poles[1];
  v.expect(std::abs(poles[0] + 3.0) < 1e-4 && std::abs(poles[1] + 2.0) < 1e-4, "poles {-3, -2} within 1e-4");

  double worst = 0.0;
  for (double re = 0.5; re <= 3.0 + 1e-12; re += 0.25) {
    for (double im = -4.0; im <= 4.0; im += 0.5) {
      const Complex s(re, im);
      worst = std::max(worst, std::abs(expansion_eval(prs, s)[0] - laplace_numeric(y, s, t_max).value[0]));
    }
  }
  v.detail << " max|expansion - numeric|=" << worst;
  v.expect(worst <= 1e-5, "expansion matches the numerical transform within 1e-5");
}

void random_signals(Verdict& v) {
  std::mt19937 rng(20240601);
  const double dt = 0.1;
  const std::size_t n = 240;
  double worst_pole = 0.0, worst_res = 0.0, worst_recon = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto sig = koopman::testing::random_exp_sum(rng);
    const int p = static_cast<int>(sig.poles.size());
    const auto y = sig.sample(dt, n);

    const PoleResidueSet prs = prony(y, dt, p);
    std::vector<Complex> pp;
    for (const auto& e : prs.entries) pp.push_back(e.pole);
    v.expect(prs.conjugate_closed(1e-8), "Prony conjugate closure");

    const SpectrumEstimate est = dmd(delay_embed(std::span<const Complex>(y), 60), dt);
    v.expect(est.rank == p, "DMD rank equals the number of terms");
    worst_recon = std::max(worst_recon, est.reconstruction_error);
    for (int k = 0; k < p && est.rank == p; ++k) {
      const std::size_t j = koopman::testing::nearest(pp, sig.poles[k]);
      worst_pole = std::max(worst_pole, std::abs(pp[j] - sig.poles[k]));
      worst_res = std::max(worst_res, std::abs(prs.entries[j].residue[0] - sig.residues[k]));
      const std::size_t q = koopman::testing::nearest(est.cont_eigs, sig.poles[k]);
      worst_pole = std::max(worst_pole, std::abs(est.cont_eigs[q] - sig.poles[k]));
      worst_res = std::max(worst_res, std::abs(est.amplitudes[q] * est.modes[q][0] - sig.residues[k]));
      const std::size_t c = koopman::testing::nearest(est.cont_eigs, std::conj(est.cont_eigs[q]));
      v.expect(std::abs(est.cont_eigs[c] - std::conj(est.cont_eigs[q])) < 1e-8, "DMD conjugate closure");
    }
    // reconstruction from the recovered expansion
    double err = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err += std::norm(expansion_time_value(prs, static_cast<double>(i) * dt)[0] - y[i]);
      total += std::norm(y[i]);
    }
    worst_recon = std::max(worst_recon, std::sqrt(err / total));
  }
  v.detail << "pole err=" << worst_pole << " residue err=" << worst_res << " reconstruction=" << worst_recon;
  v.expect(worst_pole < 1e-8, "poles within 1e-8");
  v.expect(worst_res < 1e-8, "residues within 1e-8");
  v.expect(worst_recon < 1e-8, "reconstruction");
}

void contour_vs_gla(Verdict& v) {
  const auto sys = builtin_vdp(0.3);
  const Vec x0 = vec({3.0, 0.0});
  const auto& c = vdp_cycle();
  const Decomposition d = decompose(sys, x0, c, 100.0, 0.01);
  const auto y = continued_transform(d, state_component(0), c.period, c.dominant_exponent().real());
  const Complex pole(0.0, c.omega);
  const CVec contour = cauchy_residue(y, pole, 0.15);
  AverageOptions opt;
  opt.dt = c.period / 512.0;
  const auto gla = gla_projection(sys, x0, pole, state_component(0), 400.0 * c.period, opt);
  const double rel = std::abs(contour[0] - gla.value[0]) / std::abs(gla.value[0]);
  v.detail << "contour=" << contour[0] << " gla=" << gla.value[0] << " rel=" << rel;
  v.expect(rel < 0.02, "relative difference below 2%");
}

void invariants(Verdict& v) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0), tdist(0.1, 5.0);
  const auto vdp = builtin_vdp(0.3);
  const auto coupled = builtin_coupled_vdp(0.3, 1.0, 3.0, 0.5);

  double semigroup = 0.0, variational = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const DynSystem& sys = trial % 2 ? coupled : vdp;
    Vec x0(sys.dim());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = u(rng);
    const double t = tdist(rng), s = tdist(rng);
    const Vec direct = flow(sys, x0, t + s, 1e-12);
    const Vec composed = flow(sys, flow(sys, x0, t, 1e-12), s, 1e-12);
    semigroup = std::max(semigroup, (direct - composed).norm() / std::max(1.0, direct.norm()));

    const auto vf = integrate_variational(sys, x0, t, 1e-12);
    const double h = 1e-6;
    for (int j = 0; j < sys.dim(); ++j) {
      Vec xp = x0, xm = x0;
      xp[j] += h;
      xm[j] -= h;
      const Vec col = (flow(sys, xp, t, 1e-13) - flow(sys, xm, t, 1e-13)) / (2.0 * h);
      variational = std::max(variational, (col - vf.phi.col(j)).norm() / std::max(1.0, col.norm()));
    }
  }
  v.expect(semigroup < 1e-8, "semigroup law");
  v.expect(variational < 1e-5, "variational flow vs finite differences");

  double trivial = 0.0;
  for (const double eps : {0.1, 0.3, 1.0}) {
    const auto c = analyze_limit_cycle(builtin_vdp(eps), vec({2.5, 0.5}));
    trivial = std::max(trivial, std::abs(c.trivial_multiplier - 1.0));
  }
  v.expect(trivial < 1e-4, "trivial multiplier within 1e-4 of 1");

  double linearity = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = koopman::testing::random_exp_sum(rng);
    const auto b = koopman::testing::random_exp_sum(rng);
    const Complex alpha(u(rng), u(rng)), beta(u(rng), 0.0);
    const double dt = 0.01;
    const std::size_t n = 3001;
    const auto ya = a.sample(dt, n), yb = b.sample(dt, n);
    std::vector<Complex> mix(n);
    for (std::size_t k = 0; k < n; ++k) mix[k] = alpha * ya[k] + beta * yb[k];
    const Complex s(0.2 + std::abs(u(rng)), u(rng));
    const Complex lhs = laplace_numeric(scalar_signal(mix, dt), s, 30.0).value[0];
    const Complex rhs = alpha * laplace_numeric(scalar_signal(ya, dt), s, 30.0).value[0] +
                        beta * laplace_numeric(scalar_signal(yb, dt), s, 30.0).value[0];
    linearity = std::max(linearity, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  v.expect(linearity < 1e-12, "Laplace linearity");

  int rejected = 0, attempts = 0;
  const auto y = scalar_signal(std::vector<Complex>(1001, 1.0), 0.01);
  PoleResidueSet prs;
  prs.add(Complex(-0.4, 1.0), CVec::Constant(1, 1.0), ModeTag::nonstationary);
  prs.roc_abscissa = -0.4;
  auto count_roc = [&](const std::function<void()>& f) {
    ++attempts;
    try {
      f();
    } catch (const Error& e) {
      rejected += e.kind() == ErrorKind::roc_violation;
    }
  };
  for (int trial = 0; trial < 20; ++trial) {
    const double re = -std::abs(u(rng)) * (trial % 4 == 0 ? 0.0 : 1.0);
    count_roc([&] { laplace_numeric(y, Complex(re, u(rng)), 5.0); });
    count_roc([&] { expansion_eval(prs, Complex(-0.4 - std::abs(u(rng)), u(rng))); });
    count_roc([&] { laplace_transient(y, Complex(-0.5 + re, u(rng)), -0.5); });
  }
  v.expect(rejected == attempts, "ROC violations rejected");

  v.detail << "semigroup=" << semigroup << " variational=" << variational << " |mu0-1|=" << trivial
           << " linearity=" << linearity << " roc=" << rejected << "/" << attempts;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Verdict&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "van der Pol cycle frequency and Floquet exponent", 10.0, limit_cycle_frequency},
      {2, "residual decay rate from (3, 0)", 30.0, residual_decay_rate},
      {3, "coupled oscillators converge to the torus", 60.0, torus_synchronization},
      {4, "numerical vs closed-form Laplace transforms of linear systems", 5.0, linear_transforms},
      {5, "quadratic node poles and expansion", 5.0, quadratic_node},
      {6, "DMD and Prony on random exponential sums", 10.0, random_signals},
      {7, "contour residue at i Omega vs GLA projection", 60.0, contour_vs_gla},
      {8, "invariant suites", 30.0, invariants},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > c.budget_s) {
      v.ok = false;
      v.detail << " [over budget]";
    }
    failures += !v.ok;
    std::printf("%s criterion %d (%s): %.2fs/%.0fs %s\n", v.ok ? "PASS" : "FAIL", c.id, c.name, elapsed, c.budget_s,
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
