#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dsq/audio.hpp"
#include "dsq/butterworth.hpp"
#include "dsq/codec.hpp"

namespace dsq {

/// Slots of the degradation chain, in application order.
enum class StepSlot { kFilter1, kRir1, kNoise, kFilter2, kRir2, kCodec };

struct RirSpec {
  std::string rir_id;
};

struct NoiseSpec {
  std::string noise_id;
  double snr_db = 0.0;
};

struct DegradationStep {
  StepSlot slot = StepSlot::kFilter1;
  std::variant<FilterSpec, RirSpec, NoiseSpec, CodecSpec> params;
};

struct DegradationRecipe {
  std::string segment_id;
  int variant_index = 0;
  std::uint64_t seed = 0;
  std::vector<DegradationStep> steps;  ///< always in slot order

  bool has(StepSlot slot) const;
  const DegradationStep* find(StepSlot slot) const;
};

struct DegradationProbabilities {
  double filter1 = 0.15;
  double rir1 = 0.15;
  double noise = 0.25;
  double filter2 = 0.15;
  double rir2 = 0.15;  ///< only drawn when rir1 was not applied
  double codec = 0.25;
};

struct DegradationRanges {
  double cutoff_min_hz = 10.0;
  double cutoff_max_hz = 3500.0;
  double snr_min_db = -30.0;
  double snr_max_db = 30.0;
  std::vector<CodecKind> codecs{CodecKind::kMp3, CodecKind::kOggVorbis, CodecKind::kGsm};
};

/// Identifiers available to the sampler. Ids may not contain '|', ';' or '='.
struct AssetCatalog {
  std::vector<std::string> rir_ids;
  std::vector<std::string> noise_ids;
};

/// Loaded audio for the catalog entries (16 kHz).
struct AssetBank {
  std::map<std::string, AudioClip> rirs;
  std::map<std::string, AudioClip> noises;

  AssetCatalog catalog() const;
};

/// Per-item seed; independent of how work is scheduled.
std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& segment_id, int variant_index);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Uniform double in [0, 1) from the top 53 bits of one engine output.
double uniform01(std::mt19937_64& rng);

DegradationRecipe draw_recipe(std::uint64_t master_seed, const std::string& segment_id, int variant_index,
                              const AssetCatalog& catalog, const DegradationProbabilities& probs = {},
                              const DegradationRanges& ranges = {});

/// Canonical text, e.g. "F1=lp|4|1234.567890;N=noise/a|-12.345678;C=mp3|130".
/// An empty chain encodes as "none".
std::string serialize_steps(const std::vector<DegradationStep>& steps);
std::vector<DegradationStep> parse_steps(const std::string& text);

std::string slot_name(StepSlot slot);

struct AppliedRecipe {
  AudioClip clip;
  std::optional<CodecBackend> codec_backend;
  bool loudness_normalized = true;  ///< false when the output was entirely below the loudness gate
};

/// Applies the steps in order and loudness-normalizes the result to -35 LUFS.
/// Step failures are rethrown with the step identity prefixed. Output that is
/// fully gated is returned at its own level with `loudness_normalized` unset.
AppliedRecipe apply_recipe(const AudioClip& clip, const DegradationRecipe& recipe, const AssetBank& assets,
                           const CodecOptions& codec_options = {});

struct PairStub {
  std::string pair_id;
  std::string clean_segment_id;
  DegradationRecipe recipe;
};

std::string make_pair_id(const std::string& segment_id, int variant_index);

std::vector<PairStub> generate_pairs(const std::vector<std::string>& segment_ids, std::uint64_t master_seed,
                                     int variants, const AssetCatalog& catalog,
                                     const DegradationProbabilities& probs = {},
                                     const DegradationRanges& ranges = {});

}  // namespace dsq
