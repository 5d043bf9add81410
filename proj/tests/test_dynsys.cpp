#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "koopman/dynsys.hpp"

using namespace koopman;
using Catch::Approx;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Mat diag(std::initializer_list<double> xs) { return vec(xs).asDiagonal(); }

}  // namespace

TEST_CASE("builtin_linear evaluates Ax with constant Jacobian", "[dynsys]") {
  const auto sys = builtin_linear(diag({-1.0, -2.0}));
  CHECK(sys.field(vec({1, 1})).isApprox(vec({-1, -2})));

  Mat rot(2, 2);
  rot << 0, 1, -1, 0;
  CHECK(builtin_linear(rot).field(vec({1, 0})).isApprox(vec({0, -1})));

  const auto sys3 = builtin_linear(diag({-1.0, -3.0}));
  CHECK(sys3.jacobian(vec({5, -7})) == diag({-1.0, -3.0}));
  CHECK(sys3.jacobian_source() == JacobianSource::analytic);

  CHECK_THROWS_AS(builtin_linear(Mat::Zero(2, 3)), Error);
  CHECK_THROWS_AS(sys.field(vec({1, 2, 3})), Error);
}

TEST_CASE("builtin_vdp field values", "[dynsys]") {
  const auto vdp = builtin_vdp(0.3);
  CHECK(vdp.field(vec({3, 0})).isApprox(vec({0, -3})));
  const Vec f = vdp.field(vec({0, 1}));
  CHECK(f[0] == Approx(1.0));
  CHECK(f[1] == Approx(0.3));

  const auto harmonic = builtin_vdp(0.0);
  CHECK(harmonic.field(vec({0.7, -0.2})).isApprox(vec({-0.2, -0.7})));
}

TEST_CASE("builtin_coupled_vdp field values", "[dynsys]") {
  const auto sys = builtin_coupled_vdp(0.3, 1.0, 3.0, 0.5);
  const Vec f = sys.field(vec({3, 3, 3, 3}));
  CHECK(f[0] == Approx(3.0));
  CHECK(f[1] == Approx(-10.2));
  CHECK(f[2] == Approx(3.0));
  CHECK(f[3] == Approx(-16.2));

  const auto decoupled = builtin_coupled_vdp(0.3, 1.0, 3.0, 0.0);
  const Vec a = decoupled.field(vec({0.4, -1.1, 2.0, 0.5}));
  const Vec b = decoupled.field(vec({0.4, -1.1, -3.0, 7.5}));
  CHECK(a.head(2) == b.head(2));

  // kx == ky with identical pairs keeps the pairs identical.
  const auto sym = builtin_coupled_vdp(0.3, 2.0, 2.0, 0.5);
  const Trajectory tr = integrate(sym, vec({1.5, -0.5, 1.5, -0.5}), 20.0, 0.1);
  for (const Vec& s : tr.states()) CHECK(std::abs(s[0] - s[2]) + std::abs(s[1] - s[3]) < 1e-12);
}

TEST_CASE("analytic Jacobians agree with central differences", "[dynsys][property]") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const std::vector<DynSystem> systems = {builtin_vdp(0.3), builtin_vdp(1.7), builtin_coupled_vdp(0.3, 1, 3, 0.5),
                                          builtin_quadratic_node(), builtin_linear(diag({-1, -2, -5}))};
  for (const auto& sys : systems) {
    for (int trial = 0; trial < 25; ++trial) {
      Vec x(sys.dim());
      for (auto& v : x) v = u(rng);
      const Mat analytic = sys.jacobian(x);
      const Mat fd = finite_difference_jacobian([&sys](const Vec& y) { return sys.field(y); }, x);
      const double scale = std::max(1.0, analytic.norm());
      CHECK((analytic - fd).norm() / scale < 1e-5);
    }
  }
}

TEST_CASE("finite-difference systems are flagged", "[dynsys]") {
  const auto sys = with_finite_difference_jacobian(
      2, [](const Vec& x) -> Vec { return vec({x[1], -std::sin(x[0])}); }, "pendulum");
  CHECK(sys.jacobian_source() == JacobianSource::finite_difference);
  const Mat j = sys.jacobian(vec({0.3, 0.0}));
  CHECK(j(1, 0) == Approx(-std::cos(0.3)).epsilon(1e-8));

  const DynSystem bare(1, [](const Vec& x) -> Vec { return -x; }, nullptr, "bare");
  CHECK_FALSE(bare.has_jacobian());
  CHECK_THROWS_AS(integrate_variational(bare, vec({1.0}), 1.0), Error);
}

TEST_CASE("integrate samples a uniform grid", "[dynsys][integrate]") {
  const auto vdp = builtin_vdp(0.3);
  const Trajectory tr = integrate(vdp, vec({3, 0}), 100.0, 0.01);
  CHECK(tr.size() == 10001);
  CHECK(tr.t_end() == Approx(100.0));
  for (const Vec& s : tr.states()) CHECK(s.norm() < 5.0);
  CHECK(tr.back().norm() > 0.5);

  const auto lin = builtin_linear(diag({-1.0, -2.0}));
  const Trajectory tl = integrate(lin, vec({1, 1}), 1.0, 0.1);
  CHECK(tl.size() == 11);
  CHECK(std::abs(tl.back()[0] - std::exp(-1.0)) < 1e-9);
  CHECK(std::abs(tl.back()[1] - std::exp(-2.0)) < 1e-9);
  for (std::size_t k = 0; k < tl.size(); ++k) {
    CHECK(std::abs(tl.state(k)[0] - std::exp(-tl.time(k))) < 1e-9);
  }

  CHECK_THROWS_AS(integrate(lin, vec({1, 1}), -1.0, 0.1), Error);
  CHECK_THROWS_AS(integrate(lin, vec({1, 1}), 1.0, 0.0), Error);
  CHECK_THROWS_AS(integrate(lin, vec({1, 1}), 1.0, 0.1, 0.0), Error);
}

TEST_CASE("harmonic oscillator returns after 2 pi", "[dynsys][integrate]") {
  const auto harmonic = builtin_vdp(0.0);
  const Vec end = flow(harmonic, vec({1, 0}), kTwoPi);
  CHECK((end - vec({1, 0})).norm() < 1e-8);
}

TEST_CASE("continuous output tracks the exact solution between steps", "[dynsys][integrate]") {
  const auto harmonic = builtin_vdp(0.0);
  const Trajectory tr = integrate(harmonic, vec({1, 0}), 20.0, 0.5, 1e-10, true);
  REQUIRE(tr.has_dense());
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 200; ++i) {
    const double t = u(rng);
    const Vec x = tr.at(t);
    CHECK(std::abs(x[0] - std::cos(t)) < 1e-8);
    CHECK(std::abs(x[1] + std::sin(t)) < 1e-8);
  }
}

TEST_CASE("grid interpolation without continuous output", "[dynsys]") {
  std::vector<Vec> xs;
  for (int k = 0; k <= 200; ++k) xs.push_back(vec({std::sin(0.05 * k)}));
  const Trajectory tr(0.0, 0.05, xs);
  CHECK_FALSE(tr.has_dense());
  CHECK(tr.at(3.3333)[0] == Approx(std::sin(3.3333)).margin(1e-6));
  CHECK_THROWS_AS(tr.at(11.0), Error);
}

TEST_CASE("divergence aborts with the last valid time", "[dynsys][integrate]") {
  const DynSystem blowup(1, [](const Vec& x) -> Vec { return x.cwiseProduct(x); }, nullptr, "blowup");
  try {
    integrate(blowup, vec({1.0}), 2.0, 0.1);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("t=") != std::string::npos);
  }
}

TEST_CASE("variational flow of a linear system is the matrix exponential", "[dynsys][variational]") {
  Mat a(3, 3);
  a << -1.0, 2.0, 0.0, -2.0, -1.0, 0.5, 0.0, 0.3, -3.0;
  const auto sys = builtin_linear(a);
  const auto vf = integrate_variational(sys, vec({1, -1, 2}), 1.7, 1e-11);
  const Mat expected = (a * 1.7).exp();
  CHECK((vf.phi - expected).norm() < 1e-8);

  const auto zero = integrate_variational(sys, vec({1, -1, 2}), 0.0);
  CHECK(zero.phi == Mat::Identity(3, 3));
  CHECK(zero.trajectory.size() == 1);
}

TEST_CASE("Liouville: det Phi equals exp of the integrated trace", "[dynsys][variational]") {
  const auto vdp = builtin_vdp(0.3);
  const Vec x0 = flow(vdp, vec({3, 0}), 200.0, 1e-11);
  const double t_end = 6.31;
  const auto vf = integrate_variational(vdp, x0, t_end, 1e-11, t_end / 4096.0);
  // Trapezoid quadrature of tr DF = eps (1 - x1^2) on the fine grid.
  const auto& tr = vf.trajectory;
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
    const double a = vdp.jacobian(tr.state(k)).trace();
    const double b = vdp.jacobian(tr.state(k + 1)).trace();
    integral += 0.5 * (a + b) * tr.dt();
  }
  CHECK(std::abs(vf.phi.determinant() - std::exp(integral)) < 1e-6);
}

TEST_CASE("semigroup law", "[dynsys][property]") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ux(-2.5, 2.5);
  std::uniform_real_distribution<double> ut(0.1, 10.0);
  const auto vdp = builtin_vdp(0.3);
  const double tol = 1e-9;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x0 = vec({ux(rng), ux(rng)});
    const double t1 = ut(rng), t2 = ut(rng);
    const Vec direct = flow(vdp, x0, t1 + t2, tol);
    const Vec composed = flow(vdp, flow(vdp, x0, t1, tol), t2, tol);
    CHECK((direct - composed).norm() <= 10.0 * tol * std::max(1.0, direct.norm()));
  }
}

TEST_CASE("variational columns match finite differences of the flow", "[dynsys][property]") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ux(-2.0, 2.0);
  const auto sys = builtin_coupled_vdp(0.3, 1.0, 3.0, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    Vec x0(4);
    for (auto& v : x0) v = ux(rng);
    const double t = 3.0;
    const auto vf = integrate_variational(sys, x0, t, 1e-12);
    for (int c = 0; c < 4; ++c) {
      const double h = 1e-5;
      Vec xp = x0, xm = x0;
      xp[c] += h;
      xm[c] -= h;
      const Vec col = (flow(sys, xp, t, 1e-12) - flow(sys, xm, t, 1e-12)) / (2 * h);
      CHECK((col - vf.phi.col(c)).norm() / std::max(1e-3, vf.phi.col(c).norm()) < 1e-4);
    }
  }
}

TEST_CASE("tightening tol converges the endpoint", "[dynsys][property]") {
  const auto vdp = builtin_vdp(0.3);
  for (double tol : {1e-6, 1e-7, 1e-8, 1e-9}) {
    const Vec coarse = flow(vdp, vec({3, 0}), 10.0, tol);
    const Vec fine = flow(vdp, vec({3, 0}), 10.0, tol / 10.0);
    CHECK((coarse - fine).norm() < tol * std::max(1.0, fine.norm()) * 10.0);
  }
}
