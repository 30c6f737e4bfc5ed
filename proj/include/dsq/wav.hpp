#pragma once

#include <filesystem>

#include "dsq/audio.hpp"

namespace dsq {

/// Reads RIFF/WAVE linear PCM (8/16/24/32-bit int) or IEEE float (32/64-bit).
MultiChannelAudio read_wav(const std::filesystem::path& path);

/// Convenience: read and downmix.
AudioClip read_wav_mono(const std::filesystem::path& path);

enum class WavFormat { kPcm16, kFloat32 };

/// Writes a mono clip. Float output is bit-exact for float samples.
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavFormat format = WavFormat::kFloat32);
/// Interleaved multichannel output.
void write_wav(const std::filesystem::path& path, const MultiChannelAudio& audio,
               WavFormat format = WavFormat::kFloat32);

}  // namespace dsq
