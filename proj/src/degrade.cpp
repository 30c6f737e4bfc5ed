#include "dsq/degrade.hpp"

#include <cmath>

#include "dsq/error.hpp"
#include "dsq/fft.hpp"

namespace dsq {

AudioClip convolve_rir(const AudioClip& clip, const AudioClip& rir) {
  if (rir.empty()) throw InvalidInput("convolve_rir: empty impulse response");
  if (rir.sample_rate != clip.sample_rate) throw InvalidInput("convolve_rir: sample rates differ");
  const std::vector<double> x(clip.samples.begin(), clip.samples.end());
  const std::vector<double> h(rir.samples.begin(), rir.samples.end());
  const auto y = fft::convolve(x, h, clip.size());
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(y.begin(), y.end());
  return out;
}

double noise_gain(double speech_power, double noise_power, double snr_db) {
  if (!(noise_power > 0.0)) throw InvalidInput("mix_noise: noise has zero power");
  return std::sqrt(speech_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

AudioClip mix_noise(const AudioClip& clip, const AudioClip& noise, double snr_db) {
  if (clip.size() != noise.size()) throw InvalidInput("mix_noise: speech and noise lengths differ");
  if (clip.sample_rate != noise.sample_rate) throw InvalidInput("mix_noise: sample rates differ");
  const double g = noise_gain(mean_power(clip.samples), mean_power(noise.samples), snr_db);
  AudioClip out = clip;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.samples[i] = static_cast<float>(static_cast<double>(clip.samples[i]) + g * noise.samples[i]);
  }
  return out;
}

}  // namespace dsq
