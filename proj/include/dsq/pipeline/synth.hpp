#pragma once

#include <cstdint>
#include <filesystem>
#include <random>

#include "dsq/audio.hpp"

namespace dsq::pipeline {

/// Toy corpus for tests and desk-scale runs: formant-synthesized "speech", noise beds and
/// exponentially decaying impulse responses.
struct SynthOptions {
  int n_sources = 20;
  double min_duration_s = 5.0;
  double max_duration_s = 8.0;
  int n_noises = 6;
  int n_rirs = 6;
  double noise_duration_s = 6.0;
  bool include_short_file = true;  ///< adds one 3 s source, which prepare must exclude
  bool vary_formats = true;        ///< some sources at 22.05/44.1 kHz or stereo
  std::uint64_t seed = 1;
};

AudioClip synth_speech(double seconds, int sample_rate, std::mt19937_64& rng);
AudioClip synth_noise(int kind, double seconds, int sample_rate, std::mt19937_64& rng);
AudioClip synth_rir(double rt60_s, int sample_rate, std::mt19937_64& rng);

/// Writes <root>/corpus, <root>/rirs and <root>/noises.
void synth_corpus(const std::filesystem::path& root, const SynthOptions& options);

}  // namespace dsq::pipeline
