#pragma once

#include "dsq/audio.hpp"

namespace dsq {

/// Linear convolution with a room impulse response via FFT, truncated to
/// the input length (no direct-path alignment).
AudioClip convolve_rir(const AudioClip& clip, const AudioClip& rir);

/// Gain applied to `noise` so that speech/noise power ratio equals `snr_db`.
double noise_gain(double speech_power, double noise_power, double snr_db);

/// clip + g * noise with powers measured over the whole segment.
AudioClip mix_noise(const AudioClip& clip, const AudioClip& noise, double snr_db);

}  // namespace dsq
