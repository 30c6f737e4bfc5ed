#include "dsq/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dsq/error.hpp"

namespace dsq {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

MultiChannelAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open WAV file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InvalidInput("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const auto size = static_cast<std::size_t>(load<std::uint32_t>(id + 4));
    const char* body = id + 8;
    const std::size_t available = bytes.size() - pos - 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16 || size > available) throw InvalidInput("corrupt fmt chunk: " + path.string());
      format = load<std::uint16_t>(body);
      channels = load<std::uint16_t>(body + 2);
      rate = load<std::uint32_t>(body + 4);
      bits = load<std::uint16_t>(body + 14);
      if (format == kFormatExtensible && size >= 26) format = load<std::uint16_t>(body + 24);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_size = std::min(size, available);
    }
    pos += 8 + size + (size & 1U);
  }
  if (channels == 0 || rate == 0 || data == nullptr) {
    throw InvalidInput("WAV file missing fmt or data chunk: " + path.string());
  }

  const std::size_t width = bits / 8;
  const bool supported = (format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
                         (format == kFormatFloat && (bits == 32 || bits == 64));
  if (!supported) throw InvalidInput("unsupported WAV encoding in " + path.string());

  const std::size_t frames = data_size / (width * channels);
  MultiChannelAudio audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.channels.assign(channels, std::vector<float>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data + (f * channels + c) * width;
      float v = 0.0F;
      if (format == kFormatFloat) {
        v = bits == 32 ? load<float>(p) : static_cast<float>(load<double>(p));
      } else if (bits == 8) {
        v = (static_cast<float>(static_cast<unsigned char>(*p)) - 128.0F) / 128.0F;
      } else if (bits == 16) {
        v = static_cast<float>(load<std::int16_t>(p)) / 32768.0F;
      } else if (bits == 24) {
        std::int32_t s = (static_cast<unsigned char>(p[0])) | (static_cast<unsigned char>(p[1]) << 8) |
                         (static_cast<signed char>(p[2]) * 65536);
        v = static_cast<float>(s) / 8388608.0F;
      } else {
        v = static_cast<float>(static_cast<double>(load<std::int32_t>(p)) / 2147483648.0);
      }
      audio.channels[c][f] = v;
    }
  }
  return audio;
}

AudioClip read_wav_mono(const std::filesystem::path& path) { return to_mono(read_wav(path)); }

void write_wav(const std::filesystem::path& path, const MultiChannelAudio& audio, WavFormat format) {
  if (audio.channels.empty()) throw InvalidInput("write_wav: no channels");
  const std::size_t frames = audio.channels.front().size();
  for (const auto& ch : audio.channels) {
    if (ch.size() != frames) throw InvalidInput("write_wav: channels differ in length");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EnvironmentError("cannot write WAV file: " + path.string());
  const auto n_channels = static_cast<std::uint16_t>(audio.channels.size());
  const std::uint16_t bits = format == WavFormat::kFloat32 ? 32 : 16;
  const std::uint16_t tag = format == WavFormat::kFloat32 ? kFormatFloat : kFormatPcm;
  const std::uint16_t block = n_channels * (bits / 8);
  const auto data_bytes = static_cast<std::uint32_t>(frames * block);
  const auto rate = static_cast<std::uint32_t>(audio.sample_rate);

  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, tag);
  put<std::uint16_t>(out, n_channels);
  put<std::uint32_t>(out, rate);
  put<std::uint32_t>(out, rate * block);
  put<std::uint16_t>(out, block);
  put<std::uint16_t>(out, bits);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  if (format == WavFormat::kFloat32 && n_channels == 1) {
    out.write(reinterpret_cast<const char*>(audio.channels[0].data()),
              static_cast<std::streamsize>(frames * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < frames; ++i) {
      for (const auto& ch : audio.channels) {
        if (format == WavFormat::kFloat32) {
          put<float>(out, ch[i]);
        } else {
          const float c = std::clamp(ch[i], -1.0F, 1.0F);
          put<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(std::min(c * 32768.0F, 32767.0F))));
        }
      }
    }
  }
  if (!out) throw EnvironmentError("short write to " + path.string());
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavFormat format) {
  write_wav(path, MultiChannelAudio{{clip.samples}, clip.sample_rate}, format);
}

}  // namespace dsq
