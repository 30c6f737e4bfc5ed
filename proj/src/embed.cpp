#include "dsq/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dsq/error.hpp"
#include "dsq/fft.hpp"

namespace dsq {

double cosine_distance(const Embedding& a, const Embedding& b) {
  if (a.provider_id != b.provider_id) {
    throw InvalidInput("cosine_distance: providers differ ('" + a.provider_id + "' vs '" + b.provider_id + "')");
  }
  if (a.dim() != b.dim()) throw InvalidInput("cosine_distance: dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw InvalidInput("cosine_distance: zero vector");
  const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return 1.0 - cos;
}

std::string BuiltinEmbedderConfig::provider_id() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "builtin-logmel-v1:mels=%d,win=%.1fms,hop=%.1fms,fft=%d,sr=%d,stats=mean+std",
                n_mels, window_ms, hop_ms, n_fft, sample_rate);
  return buf;
}

namespace {
double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
}  // namespace

std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_min, double f_max) {
  const int bins = n_fft / 2 + 1;
  std::vector<double> fb(static_cast<std::size_t>(n_mels * bins), 0.0);
  const double m_lo = hz_to_mel(f_min);
  const double m_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb[static_cast<std::size_t>(m * bins + k)] = w;
    }
  }
  return fb;
}

Embedding builtin_embed(const AudioClip& clip, const BuiltinEmbedderConfig& config) {
  if (clip.sample_rate != config.sample_rate) throw InvalidInput("builtin_embed: unexpected sample rate");
  const auto win = static_cast<std::size_t>(std::lround(config.window_ms * 1e-3 * config.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(config.hop_ms * 1e-3 * config.sample_rate));
  if (clip.size() < static_cast<std::size_t>(config.sample_rate / 10) || clip.size() < win) {
    throw InvalidInput("builtin_embed: clip shorter than 0.1 s");
  }
  const std::size_t bins = static_cast<std::size_t>(config.n_fft / 2 + 1);
  const auto fb = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate, 0.0, config.sample_rate / 2.0);

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
  }

  const std::size_t frames = (clip.size() - win) / hop + 1;
  const auto n_mels = static_cast<std::size_t>(config.n_mels);
  std::vector<double> sum(n_mels, 0.0), sum_sq(n_mels, 0.0);
  std::vector<double> frame(win), power(bins);
  fft::RealFft fft(static_cast<std::size_t>(config.n_fft));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < win; ++i) frame[i] = clip.samples[t * hop + i] * window[i];
    fft.power_spectrum(frame, power);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double* row = &fb[m * bins];
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += row[k] * power[k];
      const double v = std::log(e + 1e-10);
      sum[m] += v;
      sum_sq[m] += v * v;
    }
  }

  Embedding out;
  out.provider_id = config.provider_id();
  out.values.resize(2 * n_mels);
  const double n = static_cast<double>(frames);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double mean = sum[m] / n;
    const double var = std::max(0.0, sum_sq[m] / n - mean * mean);
    out.values[m] = static_cast<float>(mean);
    out.values[n_mels + m] = static_cast<float>(std::sqrt(var));
  }
  return out;
}

IndexScale compute_scale(std::span<const double> distances) {
  if (distances.empty()) throw InvalidInput("compute_scale: no distances");
  const double max = *std::max_element(distances.begin(), distances.end());
  if (!(max > 0.0)) throw InvalidInput("compute_scale: maximum distance must be positive");
  return IndexScale{max};
}

double degradation_index(double distance, const IndexScale& scale) {
  if (distance < 0.0) throw InvalidInput("degradation_index: negative distance");
  return distance / scale.scale;
}

}  // namespace dsq
