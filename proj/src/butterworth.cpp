#include "dsq/butterworth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsq/error.hpp"

namespace dsq {

SosCascade design_butterworth(const FilterSpec& spec, double sample_rate) {
  if (spec.order < 2 || spec.order % 2 != 0) {
    throw InvalidInput("design_butterworth: order must be a positive even number");
  }
  if (!(spec.cutoff_hz > 0.0) || !(spec.cutoff_hz < sample_rate / 2.0)) {
    throw InvalidInput("design_butterworth: cutoff must lie strictly between 0 and Nyquist");
  }
  const double k = std::tan(std::numbers::pi * spec.cutoff_hz / sample_rate);
  const double k2 = k * k;
  SosCascade sos;
  for (int i = 0; i < spec.order / 2; ++i) {
    // Analog section s^2 + c s + 1 from a conjugate pole pair on the unit circle.
    const double c = 2.0 * std::sin(std::numbers::pi * (2.0 * i + 1.0) / (2.0 * spec.order));
    const double a0 = 1.0 + c * k + k2;
    Biquad q;
    q.a = {1.0, 2.0 * (k2 - 1.0) / a0, (1.0 - c * k + k2) / a0};
    if (spec.kind == FilterKind::kLowPass) {
      q.b = {k2 / a0, 2.0 * k2 / a0, k2 / a0};
    } else {
      q.b = {1.0 / a0, -2.0 / a0, 1.0 / a0};
    }
    sos.push_back(q);
  }
  return sos;
}

std::complex<double> frequency_response(const SosCascade& sos, double freq_hz, double sample_rate) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h{1.0, 0.0};
  for (const Biquad& q : sos) {
    h *= (q.b[0] + q.b[1] * z1 + q.b[2] * z2) / (q.a[0] + q.a[1] * z1 + q.a[2] * z2);
  }
  return h;
}

std::vector<double> sosfilt(const SosCascade& sos, std::vector<double> x) {
  for (const Biquad& q : sos) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double x0 = v;
      const double y0 = q.b[0] * x0 + q.b[1] * x1 + q.b[2] * x2 - q.a[1] * y1 - q.a[2] * y2;
      x2 = x1;
      x1 = x0;
      y2 = y1;
      y1 = y0;
      v = y0;
    }
  }
  return x;
}

AudioClip filtfilt(const SosCascade& sos, const AudioClip& clip) {
  if (!is_stable(sos)) throw InvalidInput("filtfilt: unstable filter");
  std::vector<double> x(clip.samples.begin(), clip.samples.end());
  x = sosfilt(sos, std::move(x));
  std::reverse(x.begin(), x.end());
  x = sosfilt(sos, std::move(x));
  std::reverse(x.begin(), x.end());
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(x.begin(), x.end());
  return out;
}

bool is_stable(const SosCascade& sos) {
  return std::all_of(sos.begin(), sos.end(), [](const Biquad& q) {
    const double a1 = q.a[1] / q.a[0];
    const double a2 = q.a[2] / q.a[0];
    return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
  });
}

}  // namespace dsq
