#pragma once

#include <span>
#include <string>
#include <vector>

#include "dsq/audio.hpp"

namespace dsq {

/// Fixed-length vector from a named provider. Distances are only defined
/// between embeddings of the same provider and dimension.
struct Embedding {
  std::vector<float> values;
  std::string provider_id;

  std::size_t dim() const { return values.size(); }
};

/// 1 - cos(a, b), in [0, 2]. Throws InvalidInput on provider/dim mismatch or zero vectors.
double cosine_distance(const Embedding& a, const Embedding& b);

struct BuiltinEmbedderConfig {
  int n_mels = 64;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int sample_rate = 16000;

  std::string provider_id() const;
};

/// Log-mel statistics embedding: per-band mean then per-band standard deviation
/// over frames (2 * n_mels values). Requires >= 0.1 s of 16 kHz audio.
Embedding builtin_embed(const AudioClip& clip, const BuiltinEmbedderConfig& config = {});

/// HTK-scale triangular filterbank, n_mels x (n_fft/2 + 1), row-major.
std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_min, double f_max);

/// Linear scaling factor for degradation indices (maximum train-partition distance).
struct IndexScale {
  double scale = 1.0;
};

/// Maximum of the distances. Throws when empty or when the maximum is not positive.
IndexScale compute_scale(std::span<const double> distances);

/// distance / scale, deliberately unclamped.
double degradation_index(double distance, const IndexScale& scale);

}  // namespace dsq
