#pragma once

#include <array>
#include <complex>
#include <vector>

#include "dsq/audio.hpp"

namespace dsq {

enum class FilterKind { kLowPass, kHighPass };

struct FilterSpec {
  int order = 2;  ///< 2 or 4
  FilterKind kind = FilterKind::kLowPass;
  double cutoff_hz = 1000.0;
};

/// One biquad: y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2] (a0 normalized to 1).
struct Biquad {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

using SosCascade = std::vector<Biquad>;

/// Digital Butterworth via the bilinear transform with cutoff pre-warping,
/// realized as order/2 second-order sections.
SosCascade design_butterworth(const FilterSpec& spec, double sample_rate);

/// Complex response of the cascade at `freq_hz`.
std::complex<double> frequency_response(const SosCascade& sos, double freq_hz, double sample_rate);

/// Single causal pass with zero initial state.
std::vector<double> sosfilt(const SosCascade& sos, std::vector<double> x);

/// Forward-backward filtering; magnitude response squared, zero phase.
AudioClip filtfilt(const SosCascade& sos, const AudioClip& clip);

/// True when every section's poles lie strictly inside the unit circle.
bool is_stable(const SosCascade& sos);

}  // namespace dsq
