#include "dsq/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsq/error.hpp"

namespace dsq {

void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw InvalidInput("sample rate must be positive");
  for (float s : clip.samples) {
    if (!std::isfinite(s)) throw InvalidInput("audio contains non-finite samples");
  }
}

AudioClip to_mono(const MultiChannelAudio& audio) {
  if (audio.channels.empty()) throw InvalidInput("to_mono: zero channels");
  const std::size_t n = audio.channels.front().size();
  for (const auto& ch : audio.channels) {
    if (ch.size() != n) throw InvalidInput("to_mono: channels differ in length");
  }
  AudioClip out;
  out.sample_rate = audio.sample_rate;
  if (audio.channels.size() == 1) {
    out.samples = audio.channels.front();
    return out;
  }
  out.samples.resize(n);
  const double inv = 1.0 / static_cast<double>(audio.channels.size());
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& ch : audio.channels) acc += ch[i];
    out.samples[i] = static_cast<float>(acc * inv);
  }
  return out;
}

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kZeroCrossings = 32.0;
constexpr double kRolloff = 0.92;
constexpr double kKaiserBeta = 10.0;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Table of windowed-sinc taps, one row per output phase.
struct PolyphaseKernel {
  long up = 1;
  long down = 1;
  long half = 0;  // taps j in [-half + 1, half]
  std::vector<double> taps;

  PolyphaseKernel(long up_, long down_) : up(up_), down(down_) {
    const double cutoff = std::min(1.0, static_cast<double>(up) / down) * kRolloff;
    const double half_width = kZeroCrossings / cutoff;
    half = static_cast<long>(std::ceil(half_width));
    const long width = 2 * half;
    taps.assign(static_cast<std::size_t>(up * width), 0.0);
    const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
    for (long phase = 0; phase < up; ++phase) {
      const double frac = static_cast<double>(phase) / up;
      double* row = &taps[static_cast<std::size_t>(phase * width)];
      double sum = 0.0;
      for (long j = -half + 1; j <= half; ++j) {
        const double tau = frac - static_cast<double>(j);
        double h = 0.0;
        if (std::abs(tau) < half_width) {
          const double r = tau / half_width;
          const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
          h = cutoff * sinc(cutoff * tau) * w;
        }
        row[j + half - 1] = h;
        sum += h;
      }
      // Unit DC gain for every phase.
      for (long j = 0; j < width; ++j) row[j] /= sum;
    }
  }
};

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw InvalidInput("resample: target rate must be positive");
  if (clip.sample_rate <= 0) throw InvalidInput("resample: source rate must be positive");
  if (clip.sample_rate == target_rate) return clip;

  const long g = std::gcd(static_cast<long>(clip.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = clip.sample_rate / g;
  const PolyphaseKernel kernel(up, down);

  const long n_in = static_cast<long>(clip.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  const long width = 2 * kernel.half;

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long pos = n * down;
    const long base = pos / up;
    const long phase = pos % up;
    const double* row = &kernel.taps[static_cast<std::size_t>(phase * width)];
    double acc = 0.0;
    const long k_lo = std::max(0L, base - kernel.half + 1);
    const long k_hi = std::min(n_in - 1, base + kernel.half);
    for (long k = k_lo; k <= k_hi; ++k) {
      acc += row[k - base + kernel.half - 1] * clip.samples[static_cast<std::size_t>(k)];
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

TrimResult trim_silence(const AudioClip& clip, const TrimOptions& options) {
  if (clip.empty()) throw InvalidInput("trim_silence: empty clip");
  if (options.frame_length == 0 || options.hop_length == 0) {
    throw InvalidInput("trim_silence: frame and hop must be positive");
  }
  const std::size_t n = clip.size();
  std::vector<double> power;
  for (std::size_t start = 0; start < n; start += options.hop_length) {
    const std::size_t stop = std::min(n, start + options.frame_length);
    power.push_back(mean_power(std::span(clip.samples).subspan(start, stop - start)));
  }
  const double max_power = *std::max_element(power.begin(), power.end());

  TrimResult result;
  result.clip.sample_rate = clip.sample_rate;
  if (max_power <= 0.0) {
    result.all_silent = true;
    return result;
  }
  // Relative slack (about 4e-6 dB) absorbs float rounding of frames sitting exactly on the threshold.
  const double floor = max_power * std::pow(10.0, -options.threshold_db / 10.0) * (1.0 - 1e-6);
  std::size_t first = power.size();
  std::size_t last = 0;
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (power[i] >= floor) {
      first = std::min(first, i);
      last = i;
    }
  }
  result.start = first * options.hop_length;
  result.end = std::min(n, last * options.hop_length + options.frame_length);
  result.clip.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(result.start),
                             clip.samples.begin() + static_cast<std::ptrdiff_t>(result.end));
  return result;
}

std::size_t segment_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw InvalidInput("segment: window and hop must be positive");
  if (n_samples < window) return 0;
  return (n_samples - window) / hop + 1;
}

std::vector<Segment> segment(const AudioClip& clip, const std::string& source_id,
                             double window_s, double hop_s) {
  if (!(window_s > 0.0) || !(hop_s > 0.0)) {
    throw InvalidInput("segment: window and hop must be positive");
  }
  const auto window = static_cast<std::size_t>(std::llround(window_s * clip.sample_rate));
  const auto hop = static_cast<std::size_t>(std::llround(hop_s * clip.sample_rate));
  const std::size_t count = segment_count(clip.size(), window, hop);
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Segment seg;
    seg.source_id = source_id;
    seg.offset_s = static_cast<double>(k * hop) / clip.sample_rate;
    seg.clip.sample_rate = clip.sample_rate;
    const auto first = clip.samples.begin() + static_cast<std::ptrdiff_t>(k * hop);
    seg.clip.samples.assign(first, first + static_cast<std::ptrdiff_t>(window));
    out.push_back(std::move(seg));
  }
  return out;
}

double mean_power(std::span<const float> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(samples.size());
}

}  // namespace dsq
