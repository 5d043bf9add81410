#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "koopman/error.hpp"
#include "koopman/types.hpp"

namespace koopman {

enum class ModeTag { stationary, nonstationary, equilibrium };

inline const char* to_string(ModeTag t) {
  switch (t) {
    case ModeTag::stationary: return "stationary";
    case ModeTag::nonstationary: return "nonstationary";
    case ModeTag::equilibrium: return "equilibrium";
  }
  return "unknown";
}

/// One term r / (s - pole) of a resolvent expansion.
struct PoleResidue {
  Complex pole;
  CVec residue;
  ModeTag tag = ModeTag::nonstationary;
  std::vector<int> indices;  // (k, m) for cycle expansions, (k_1..k_n) at equilibria
};

/// Finite truncation of sum_k r_k / (s - s_k), valid for Re(s) > roc_abscissa.
struct PoleResidueSet {
  std::vector<PoleResidue> entries;
  double roc_abscissa = 0.0;

  int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().residue.size()); }

  void add(Complex pole, CVec residue, ModeTag tag, std::vector<int> indices = {}) {
    if (!entries.empty()) require(residue.size() == entries.front().residue.size(), "PoleResidueSet: residue dimension mismatch");
    entries.push_back({pole, std::move(residue), tag, std::move(indices)});
  }

  /// True when every entry has a conjugate partner (pole and residue) within tol.
  bool conjugate_closed(double tol) const {
    for (const auto& e : entries) {
      const bool found = std::any_of(entries.begin(), entries.end(), [&](const PoleResidue& o) {
        const double pole_scale = std::max(1.0, std::abs(e.pole));
        const double res_scale = std::max(1.0, e.residue.norm());
        return std::abs(o.pole - std::conj(e.pole)) <= tol * pole_scale &&
               (o.residue - e.residue.conjugate()).norm() <= tol * res_scale;
      });
      if (!found) return false;
    }
    return true;
  }
};

/// sum_k r_k / (s - s_k).
inline CVec expansion_eval(const PoleResidueSet& prs, Complex s) {
  require(!prs.entries.empty(), "expansion_eval: empty expansion");
  if (!(s.real() > prs.roc_abscissa)) {
    std::ostringstream os;
    os << "expansion_eval: Re(s)=" << s.real() << " outside region of convergence Re(s) > " << prs.roc_abscissa;
    fail(ErrorKind::roc_violation, os.str());
  }
  CVec acc = CVec::Zero(prs.dim());
  for (const auto& e : prs.entries) {
    const Complex d = s - e.pole;
    if (std::abs(d) < 1e-12) fail(ErrorKind::invalid_argument, "expansion_eval: s coincides with a stored pole");
    acc += e.residue / d;
  }
  return acc;
}

/// Time-domain counterpart sum_k r_k e^{s_k t}.
inline CVec expansion_time_value(const PoleResidueSet& prs, double t) {
  CVec acc = CVec::Zero(prs.dim());
  for (const auto& e : prs.entries) acc += e.residue * std::exp(e.pole * t);
  return acc;
}

}  // namespace koopman
