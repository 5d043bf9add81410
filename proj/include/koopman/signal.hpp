#pragma once

#include <cmath>
#include <vector>

#include "koopman/dynsys.hpp"
#include "koopman/error.hpp"
#include "koopman/types.hpp"

namespace koopman {

/// Uniformly sampled output y(t_k) in C^m, t_k = t0 + k dt.
struct SampledSignal {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<CVec> values;

  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
  std::size_t size() const { return values.size(); }
  double span() const { return values.empty() ? 0.0 : dt * static_cast<double>(values.size() - 1); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), "SampledSignal: dt must be positive");
    require(!values.empty(), "SampledSignal: no samples");
    const auto m = values.front().size();
    require(m > 0, "SampledSignal: zero-dimensional samples");
    for (const auto& v : values) require(v.size() == m, "SampledSignal: inconsistent sample dimension");
  }

  /// One component as a scalar sequence.
  std::vector<Complex> component(int i) const {
    require(i >= 0 && i < dim(), "SampledSignal::component: index out of range");
    std::vector<Complex> out;
    out.reserve(values.size());
    for (const auto& v : values) out.push_back(v[i]);
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : values) m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
  }
};

inline SampledSignal sample_observable(const Trajectory& tr, const Observable& obs) {
  SampledSignal s;
  s.t0 = tr.t0();
  s.dt = tr.dt();
  s.values.reserve(tr.size());
  for (const auto& x : tr.states()) s.values.push_back(obs(x));
  return s;
}

template <class F>
SampledSignal sample_function(F&& f, double dt, std::size_t count) {
  SampledSignal s;
  s.dt = dt;
  s.values.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) * dt;
    CVec v(1);
    v[0] = f(t);
    s.values.push_back(v);
  }
  return s;
}

inline SampledSignal scalar_signal(const std::vector<Complex>& ys, double dt, double t0 = 0.0) {
  SampledSignal s;
  s.t0 = t0;
  s.dt = dt;
  s.values.reserve(ys.size());
  for (const Complex y : ys) {
    CVec v(1);
    v[0] = y;
    s.values.push_back(v);
  }
  return s;
}

}  // namespace koopman
