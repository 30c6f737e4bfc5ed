#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dsq {

/// Mono waveform. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Channel-major multichannel audio as decoded from a file.
struct MultiChannelAudio {
  std::vector<std::vector<float>> channels;
  int sample_rate = 16000;
};

/// Throws InvalidInput when any sample is NaN/Inf or the rate is not positive.
void validate(const AudioClip& clip);

/// Arithmetic mean of all channels.
AudioClip to_mono(const MultiChannelAudio& audio);

/// Band-limited rational resampling (polyphase Kaiser-windowed sinc).
/// Identity when the rates already match.
AudioClip resample(const AudioClip& clip, int target_rate);

struct TrimResult {
  AudioClip clip;
  std::size_t start = 0;  ///< first retained sample in the input
  std::size_t end = 0;    ///< one past the last retained sample
  bool all_silent = false;
};

struct TrimOptions {
  double threshold_db = 30.0;
  std::size_t frame_length = 2048;
  std::size_t hop_length = 512;
};

/// Drops leading/trailing frames whose RMS sits more than `threshold_db`
/// below the loudest frame. A frame exactly at the threshold is kept.
TrimResult trim_silence(const AudioClip& clip, const TrimOptions& options = {});

struct Segment {
  std::string source_id;
  double offset_s = 0.0;
  AudioClip clip;
};

/// Number of full windows that fit: floor((n - window) / hop) + 1, or 0.
std::size_t segment_count(std::size_t n_samples, std::size_t window, std::size_t hop);

std::vector<Segment> segment(const AudioClip& clip, const std::string& source_id,
                             double window_s = 4.0, double hop_s = 1.0);

/// Mean square over the whole clip.
double mean_power(std::span<const float> samples);

}  // namespace dsq
