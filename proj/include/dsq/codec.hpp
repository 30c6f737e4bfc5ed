#pragma once

#include <map>
#include <optional>
#include <string>

#include "dsq/audio.hpp"

namespace dsq {

enum class CodecKind { kMp3, kOggVorbis, kGsm, kPassthrough };

enum class CodecBackend { kExternal, kBuiltinApprox };

struct CodecSpec {
  CodecKind codec = CodecKind::kGsm;
  int quality = 0;  ///< mp3: bitrate from the fixed list; ogg: -1..10; gsm: unused
};

/// Allowed mp3 settings: 5..20, 30, 40, 65, 85, 100, 115, 130, 190, 320.
const std::vector<int>& mp3_quality_levels();

/// Throws InvalidInput when the quality is outside the codec's allowed set.
void validate(const CodecSpec& spec);

std::string to_string(CodecKind kind);
CodecKind codec_from_string(const std::string& name);
std::string to_string(CodecBackend backend);

/// Shell command templates for external encoders. `{in}`, `{out}` and `{q}`
/// are substituted; an empty template means "not configured".
struct ExternalCodecConfig {
  std::map<std::string, std::string> encode;  ///< keyed by codec name
  std::map<std::string, std::string> decode;
  std::string container_ext(CodecKind kind) const;
};

struct CodecOptions {
  ExternalCodecConfig external;
  bool prefer_external = true;
  bool allow_fallback = true;  ///< use the builtin approximation when external tools are missing
};

struct CodecResult {
  AudioClip clip;
  CodecBackend backend = CodecBackend::kBuiltinApprox;
};

/// Round-trips a 16 kHz clip through the codec. The gsm path always runs
/// 16k -> 8k -> codec -> 16k. Output length is reconciled to the input length
/// (trim or zero-pad, anchored at sample 0).
CodecResult apply_codec(const AudioClip& clip, const CodecSpec& spec, const CodecOptions& options = {});

/// G.711 A-law round trip of 13-bit linear PCM, the companding core of the builtin gsm path.
float alaw_round_trip(float sample);

/// True when the configured external encoder binary for `kind` can be run.
bool external_codec_available(CodecKind kind, const ExternalCodecConfig& config);

}  // namespace dsq
