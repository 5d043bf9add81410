#include <catch_amalgamated.hpp>

#include <cmath>

#include "koopman/limit_cycle.hpp"

using namespace koopman;
using Catch::Approx;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

const LimitCycleInfo& vdp_cycle() {
  static const LimitCycleInfo info = analyze_limit_cycle(builtin_vdp(0.3), vec2(3.0, 0.0));
  return info;
}

bool has_kind(const Error& e, ErrorKind k) { return e.kind() == k; }

}  // namespace

TEST_CASE("settle reaches the cycle, contracts to equilibria, and is the identity at 0", "[limit_cycle]") {
  const auto sys = builtin_vdp(0.3);
  const Vec s = settle(sys, vec2(3.0, 0.0), 200.0, 1e-11);
  const auto p = find_period(sys, s);
  CHECK((flow(sys, s, p.period, 1e-11) - s).norm() < 1e-6);

  Mat a = Mat::Zero(2, 2);
  a(0, 0) = -1.0;
  a(1, 1) = -2.0;
  CHECK(settle(builtin_linear(a), vec2(1.0, 1.0), 200.0).norm() < 1e-6);
  CHECK(settle(sys, vec2(3.0, 0.0), 0.0) == vec2(3.0, 0.0));
}

TEST_CASE("van der Pol frequency from section crossings and the FFT", "[limit_cycle]") {
  const auto& c = vdp_cycle();
  CHECK(c.omega == Approx(0.995).margin(0.005));
  CHECK(c.omega * c.period == Approx(kTwoPi).epsilon(1e-15));
  const auto p = find_period(builtin_vdp(0.3), c.anchor);
  CHECK(p.fft_consistent);
  CHECK(std::abs(p.omega - p.fft_omega) <= p.fft_bin_width);
}

TEST_CASE("harmonic oscillator period is 2 pi", "[limit_cycle]") {
  const auto p = find_period(builtin_vdp(0.0), vec2(1.0, 0.0));
  CHECK(p.period == Approx(kTwoPi).margin(1e-8));
}

TEST_CASE("period does not depend on the anchor", "[limit_cycle][property]") {
  const auto sys = builtin_vdp(0.3);
  const auto& c = vdp_cycle();
  for (const double frac : {0.17, 0.5, 0.83}) {
    const Vec other = flow(sys, c.anchor, frac * c.period, 1e-12);
    CHECK(std::abs(find_period(sys, other).period - c.period) < 1e-6 * c.period);
  }
}

TEST_CASE("van der Pol Floquet exponent", "[limit_cycle]") {
  const auto& c = vdp_cycle();
  REQUIRE(c.multipliers.size() == 1);
  REQUIRE(c.exponents.size() == 1);
  CHECK(c.dominant_exponent().real() == Approx(-0.301).margin(0.005));
  CHECK(std::abs(c.trivial_multiplier - 1.0) < 1e-4);
  CHECK(std::abs(c.multipliers[0]) < 1.0);
  CHECK(std::abs(c.multipliers[0] - std::exp(c.exponents[0] * c.period)) < 1e-10);
  CHECK(std::abs(c.multipliers[0] - std::exp(kTwoPi * c.exponents[0] / c.omega)) < 1e-10);
}

TEST_CASE("weaker damping contracts more slowly", "[limit_cycle]") {
  const auto weak = analyze_limit_cycle(builtin_vdp(0.1), vec2(3.0, 0.0));
  CHECK(std::abs(weak.dominant_exponent().real()) < std::abs(vdp_cycle().dominant_exponent().real()));
}

TEST_CASE("monodromy determinant matches the Liouville integral", "[limit_cycle]") {
  const auto sys = builtin_vdp(0.3);
  const auto& c = vdp_cycle();
  const std::size_t n = 4096;
  const Trajectory tr = integrate(sys, c.anchor, c.period, c.period / static_cast<double>(n), 1e-12, true);
  auto trace_at = [&](double t) { return sys.jacobian(tr.at(std::min(t, c.period))).trace(); };
  // Simpson over the period
  double acc = trace_at(0.0) + trace_at(c.period);
  const double h = c.period / static_cast<double>(n);
  for (std::size_t k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * trace_at(static_cast<double>(k) * h);
  const double integral = acc * h / 3.0;
  const Complex det = c.trivial_multiplier * c.multipliers[0];
  CHECK(std::abs(c.monodromy.determinant() - std::exp(integral)) < 1e-6);
  CHECK(std::abs(det - std::exp(integral)) < 1e-6);
}

TEST_CASE("structures without an isolated stable cycle are rejected", "[limit_cycle]") {
  using Catch::Matchers::Predicate;
  auto not_found = Predicate<Error>([](const Error& e) { return has_kind(e, ErrorKind::not_found); });

  // harmonic oscillator: every multiplier equals 1
  CHECK_THROWS_MATCHES(floquet(builtin_vdp(0.0), vec2(1.0, 0.0), kTwoPi), Error, not_found);

  // stable node: no cycle at all
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = -1.0;
  a(1, 1) = -2.0;
  CHECK_THROWS_MATCHES(analyze_limit_cycle(builtin_linear(a), vec2(1.0, 1.0)), Error, not_found);

  // wrong period: trivial multiplier far from 1
  const auto& c = vdp_cycle();
  CHECK_THROWS_MATCHES(floquet(builtin_vdp(0.3), c.anchor, 0.7 * c.period), Error, not_found);

  // time-reversed van der Pol: same orbit, repelling
  const Vec mirrored = vec2(c.anchor[0], -c.anchor[1]);
  CHECK_THROWS_MATCHES(floquet(builtin_vdp(-0.3), mirrored, c.period), Error, not_found);
}

TEST_CASE("cycle parameterization", "[limit_cycle]") {
  const auto samples = parameterize_cycle(builtin_vdp(0.0), vec2(1.0, 0.0), kTwoPi, 4, 1e-12);
  REQUIRE(samples.size() == 4);
  const Vec expect[4] = {vec2(1, 0), vec2(0, -1), vec2(-1, 0), vec2(0, 1)};
  for (int k = 0; k < 4; ++k) {
    CHECK(samples[k].theta == Approx(kTwoPi * k / 4.0));
    CHECK((samples[k].state - expect[k]).norm() < 1e-9);
  }

  const auto sys = builtin_vdp(0.3);
  const auto& c = vdp_cycle();
  REQUIRE(c.cycle_samples.size() == 512);
  CHECK(c.cycle_samples.front().state == c.anchor);
  for (const std::size_t k : {37u, 128u, 300u, 511u}) {
    const auto& s = c.cycle_samples[k];
    CHECK((flow(sys, c.anchor, c.period * s.theta / kTwoPi, 1e-12) - s.state).norm() < 1e-7);
  }
}
