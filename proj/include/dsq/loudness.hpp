#pragma once

#include <optional>

#include "dsq/audio.hpp"

namespace dsq {

/// Gated integrated loudness (ITU-R BS.1770-4) of a mono clip, in LUFS.
/// Returns nullopt when every 400 ms block is gated out (e.g. digital silence).
/// Throws InvalidInput when the clip is shorter than one gating block.
std::optional<double> measure_lufs(const AudioClip& clip);

/// Applies a single gain so the clip measures `target_lufs`.
/// Throws Unmeasurable for clips whose loudness cannot be measured.
AudioClip normalize_lufs(const AudioClip& clip, double target_lufs = -35.0);

inline constexpr double kTargetLufs = -35.0;

}  // namespace dsq
