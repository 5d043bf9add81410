#include <catch_amalgamated.hpp>

#include <cmath>

#include "koopman/decompose.hpp"

using namespace koopman;
using Catch::Approx;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

const LimitCycleInfo& vdp_cycle() {
  static const LimitCycleInfo info = analyze_limit_cycle(builtin_vdp(0.3), vec({3.0, 0.0}));
  return info;
}

const Decomposition& fig1() {
  static const Decomposition dec = decompose(builtin_vdp(0.3), vec({3.0, 0.0}), vdp_cycle(), 100.0, 0.01);
  return dec;
}

bool kind_is(const Error& e, ErrorKind k) { return e.kind() == k; }

/// Decomposition whose residual is the given scalar function in component 0.
Decomposition synthetic(const std::function<double(double)>& r, double horizon, double dt) {
  std::vector<Vec> orig, stat;
  const std::size_t n = detail::grid_count(horizon, dt) + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    stat.push_back(vec({std::sin(t), 0.0}));
    orig.push_back(vec({std::sin(t) + r(t), 0.0}));
  }
  return make_decomposition(Trajectory(0.0, dt, orig), Trajectory(0.0, dt, stat));
}

}  // namespace

TEST_CASE("residual is the exact sample difference", "[decompose]") {
  const auto& d = fig1();
  REQUIRE(d.original.size() == 10001);
  REQUIRE(d.stationary.size() == d.original.size());
  REQUIRE(d.residual.size() == d.original.size());
  CHECK(d.stationary.dt() == d.original.dt());
  CHECK(d.residual.t0() == d.original.t0());
  for (std::size_t k = 0; k < d.original.size(); k += 7) {
    CHECK(d.original.state(k) - d.stationary.state(k) == d.residual.state(k));
    // adding back the residual reproduces the original up to one rounding per entry
    const Vec back = d.stationary.state(k) + d.residual.state(k);
    CHECK((back - d.original.state(k)).cwiseAbs().maxCoeff() <=
          4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, d.original.state(k).cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("mismatched grids are rejected", "[decompose]") {
  std::vector<Vec> a(5, vec({0.0})), b(6, vec({0.0}));
  CHECK_THROWS_AS(make_decomposition(Trajectory(0.0, 0.1, a), Trajectory(0.0, 0.1, b)), Error);
  CHECK_THROWS_AS(make_decomposition(Trajectory(0.0, 0.1, a), Trajectory(0.0, 0.2, a)), Error);
}

TEST_CASE("on-cycle input has no residual", "[decompose]") {
  const auto& c = vdp_cycle();
  const Vec on = flow(builtin_vdp(0.3), c.anchor, 2.0, 1e-12);
  const auto d = decompose(builtin_vdp(0.3), on, c, 50.0, 0.01);
  double worst = 0.0;
  for (std::size_t k = 0; k < d.residual.size(); ++k) worst = std::max(worst, d.residual.state(k).norm());
  CHECK(worst < 1e-6);
  CHECK_THROWS_MATCHES(decay_rate(d, 0, c.period), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return kind_is(e, ErrorKind::degenerate_fit);
                       }));
}

TEST_CASE("stationary part is periodic and the residual decays", "[decompose]") {
  const auto& d = fig1();
  const auto& c = vdp_cycle();
  for (double t = 0.0; t + c.period <= 100.0; t += 3.7) {
    CHECK((d.stationary.at(t + c.period) - d.stationary.at(t)).norm() < 1e-5);
  }
  const double initial = d.residual.state(0).norm();
  double late = 0.0;
  for (std::size_t k = 3 * d.residual.size() / 4; k < d.residual.size(); ++k) {
    late = std::max(late, d.residual.state(k).norm());
  }
  CHECK(late < 0.01 * initial);
}

TEST_CASE("decay fit of an exact exponential envelope", "[decompose]") {
  const double nu = -0.301, omega = 0.995, period = kTwoPi / omega;
  const auto d = synthetic([&](double t) { return std::exp(nu * t) * std::cos(omega * t + 0.4); }, 60.0, 0.01);
  const auto fit = decay_rate(d, 0, period);
  CHECK(fit.rate == Approx(nu).margin(1e-6));
  CHECK(fit.r2 > 0.999999);
  CHECK(fit.used >= 4);
  CHECK(fit.window_start == Approx(0.3 * fit.strobe_times.back()));
  REQUIRE(fit.strobe_times.size() == fit.strobe_values.size());
  for (std::size_t k = 0; k < fit.strobe_times.size(); ++k) {
    CHECK(fit.strobe_times[k] == Approx(period * static_cast<double>(k)));
  }
}

TEST_CASE("decay fit refuses too few samples", "[decompose]") {
  const auto d = synthetic([](double t) { return std::exp(-0.3 * t); }, 20.0, 0.01);
  CHECK_THROWS_MATCHES(decay_rate(d, 0, 6.3), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return kind_is(e, ErrorKind::degenerate_fit);
                       }));
  CHECK_THROWS_AS(decay_rate(d, 5, 6.3), Error);
}

TEST_CASE("van der Pol residual decays at the Floquet rate", "[decompose]") {
  const auto& c = vdp_cycle();
  const auto fit = decay_rate(fig1(), 0, c.period);
  CHECK(fit.rate == Approx(-0.301).margin(0.015));
  CHECK(fit.r2 > 0.99);

  DecayFitOptions shifted;
  shifted.strobe_offset = 0.5 * c.period;
  const auto other = decay_rate(fig1(), 0, c.period, shifted);
  CHECK(std::abs(other.rate - fit.rate) < 0.05 * std::abs(fit.rate));
}

TEST_CASE("later fit windows approach the dominant exponent", "[decompose][property]") {
  const auto& c = vdp_cycle();
  const double nu = c.dominant_exponent().real();
  const auto d = decompose(builtin_vdp(0.3), vec({3.0, 0.0}), c, 60.0, 0.01);
  DecayFitOptions early;
  early.discard_fraction = 0.0;
  DecayFitOptions late;
  late.discard_fraction = 0.4;
  const double e = decay_rate(d, 0, c.period, early).rate;
  const double l = decay_rate(d, 0, c.period, late).rate;
  CHECK(std::abs(l - nu) < std::abs(e - nu));
}

TEST_CASE("doubling the horizon keeps the fitted rate", "[decompose]") {
  const auto& c = vdp_cycle();
  const auto d = decompose(builtin_vdp(0.3), vec({3.0, 0.0}), c, 200.0, 0.01);
  const double a = decay_rate(fig1(), 0, c.period).rate;
  const double b = decay_rate(d, 0, c.period).rate;
  CHECK(std::abs(a - b) < 0.05 * std::abs(a));
}

TEST_CASE("coupled van der Pol trajectories synchronize on the torus", "[decompose][torus]") {
  const auto sys = builtin_coupled_vdp(0.3, 1.0, 3.0, 0.5);
  const Vec x0 = vec({3, 3, 3, 3});
  const auto torus = characterize_torus(sys, x0, full_state(4));
  const auto d = decompose(sys, x0, torus, 200.0, 0.01);
  REQUIRE(d.phases.size() == 2);
  const double initial = d.residual.state(0).cwiseAbs().maxCoeff();
  double tail = 0.0;
  for (std::size_t k = d.residual.size() - d.residual.size() / 10; k < d.residual.size(); ++k) {
    tail = std::max(tail, d.residual.state(k).cwiseAbs().maxCoeff());
  }
  CHECK(tail < 0.02 * initial);
}
