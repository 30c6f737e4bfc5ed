#include "dsq/loudness.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "dsq/error.hpp"

namespace dsq {
namespace {

struct Biquad {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

// K-weighting stages derived from their analog parameters, valid at any rate.
std::array<Biquad, 2> k_weighting(double fs) {
  Biquad shelf;
  {
    const double f0 = 1681.974450955533;
    const double gain_db = 3.999843853973347;
    const double q = 0.7071752369554196;
    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double vh = std::pow(10.0, gain_db / 20.0);
    const double vb = std::pow(vh, 0.4996667741545416);
    const double a0 = 1.0 + k / q + k * k;
    shelf.b = {(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0};
    shelf.a = {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  Biquad highpass;
  {
    const double f0 = 38.13547087602444;
    const double q = 0.5003270373238773;
    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double a0 = 1.0 + k / q + k * k;
    highpass.b = {1.0, -2.0, 1.0};
    highpass.a = {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  return {shelf, highpass};
}

constexpr double kAbsoluteGate = -70.0;
constexpr double kRelativeGate = -10.0;

double block_loudness(double mean_square) { return -0.691 + 10.0 * std::log10(mean_square); }

}  // namespace

std::optional<double> measure_lufs(const AudioClip& clip) {
  const double fs = clip.sample_rate;
  const auto block = static_cast<std::size_t>(std::lround(0.4 * fs));
  const auto step = static_cast<std::size_t>(std::lround(0.1 * fs));
  if (clip.size() < block || block == 0) {
    throw InvalidInput("measure_lufs: clip shorter than one 400 ms gating block");
  }

  std::vector<double> weighted(clip.samples.begin(), clip.samples.end());
  for (const Biquad& f : k_weighting(fs)) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : weighted) {
      const double x0 = v;
      const double y0 = f.b[0] * x0 + f.b[1] * x1 + f.b[2] * x2 - f.a[1] * y1 - f.a[2] * y2;
      x2 = x1;
      x1 = x0;
      y2 = y1;
      y1 = y0;
      v = y0;
    }
  }

  // Prefix sums of squares make each overlapping block O(1).
  std::vector<double> prefix(weighted.size() + 1, 0.0);
  for (std::size_t i = 0; i < weighted.size(); ++i) prefix[i + 1] = prefix[i] + weighted[i] * weighted[i];

  const std::size_t blocks = (weighted.size() - block) / step + 1;
  std::vector<double> energies;
  energies.reserve(blocks);
  for (std::size_t j = 0; j < blocks; ++j) {
    const double z = (prefix[j * step + block] - prefix[j * step]) / static_cast<double>(block);
    if (z > 0.0 && block_loudness(z) > kAbsoluteGate) energies.push_back(z);
  }
  if (energies.empty()) return std::nullopt;

  double sum = 0.0;
  for (double z : energies) sum += z;
  const double relative_gate = block_loudness(sum / static_cast<double>(energies.size())) + kRelativeGate;

  double gated_sum = 0.0;
  std::size_t gated = 0;
  for (double z : energies) {
    if (block_loudness(z) > relative_gate) {
      gated_sum += z;
      ++gated;
    }
  }
  if (gated == 0) return std::nullopt;
  return block_loudness(gated_sum / static_cast<double>(gated));
}

AudioClip normalize_lufs(const AudioClip& clip, double target_lufs) {
  const auto measured = measure_lufs(clip);
  if (!measured) throw Unmeasurable("normalize_lufs: loudness is unmeasurable (fully gated)");
  // Scaling a quiet clip can lift blocks over the absolute gate, which moves the gated
  // level; re-measure and fold the correction into one overall gain.
  double gain = std::pow(10.0, (target_lufs - *measured) / 20.0);
  AudioClip out = clip;
  for (int iter = 0; iter < 8; ++iter) {
    for (std::size_t i = 0; i < clip.size(); ++i) out.samples[i] = static_cast<float>(clip.samples[i] * gain);
    const auto level = measure_lufs(out);
    if (!level || std::abs(*level - target_lufs) < 1e-3) break;
    gain *= std::pow(10.0, (target_lufs - *level) / 20.0);
  }
  return out;
}

}  // namespace dsq
