#pragma once

// FFT peak picking used as a coarse frequency estimate before refinement.

#include <algorithm>
#include <cmath>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "koopman/error.hpp"
#include "koopman/types.hpp"

namespace koopman {

struct SpectralPeak {
  double omega = 0.0;      // rad/s, bin centre
  double magnitude = 0.0;  // |X_k|
  double bin_width = 0.0;  // rad/s
};

/// One-sided amplitude spectrum |X_k|, k = 0..N/2, of a real signal with its
/// mean removed. With hann set, a Hann window is applied first.
inline std::vector<double> amplitude_spectrum(const Vec& signal, bool hann = false) {
  const Eigen::Index n = signal.size();
  require(n >= 4, "amplitude_spectrum: need at least 4 samples");
  const double mean = signal.mean();
  std::vector<double> in(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const double w = hann ? 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(n)) : 1.0;
    in[static_cast<std::size_t>(k)] = w * (signal[k] - mean);
  }
  Eigen::FFT<double> fft;
  std::vector<Complex> out;
  fft.fwd(out, in);
  std::vector<double> mag(static_cast<std::size_t>(n / 2 + 1));
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(out[k]);
  return mag;
}

/// Largest non-DC peak of the spectrum of a uniformly sampled real signal.
inline SpectralPeak dominant_frequency(const Vec& signal, double dt) {
  require(dt > 0.0, "dominant_frequency: dt must be positive");
  const auto mag = amplitude_spectrum(signal);
  const double bin = kTwoPi / (static_cast<double>(signal.size()) * dt);
  std::size_t best = 1;
  for (std::size_t k = 2; k < mag.size(); ++k) {
    if (mag[k] > mag[best]) best = k;
  }
  return SpectralPeak{bin * static_cast<double>(best), mag[best], bin};
}

/// Local maxima of the Hann-windowed spectrum, strongest first.
inline std::vector<SpectralPeak> spectral_peaks(const Vec& signal, double dt, std::size_t max_count) {
  require(dt > 0.0, "spectral_peaks: dt must be positive");
  const auto mag = amplitude_spectrum(signal, true);
  const double bin = kTwoPi / (static_cast<double>(signal.size()) * dt);
  std::vector<SpectralPeak> peaks;
  for (std::size_t k = 1; k + 1 < mag.size(); ++k) {
    if (mag[k] > mag[k - 1] && mag[k] >= mag[k + 1]) peaks.push_back({bin * static_cast<double>(k), mag[k], bin});
  }
  std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.magnitude > b.magnitude; });
  if (peaks.size() > max_count) peaks.resize(max_count);
  return peaks;
}

}  // namespace koopman
