#include "dsq/codec.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "dsq/butterworth.hpp"
#include "dsq/error.hpp"
#include "dsq/wav.hpp"

namespace dsq {
namespace fs = std::filesystem;

const std::vector<int>& mp3_quality_levels() {
  static const std::vector<int> levels = [] {
    std::vector<int> v;
    for (int q = 5; q <= 20; ++q) v.push_back(q);
    for (int q : {30, 40, 65, 85, 100, 115, 130, 190, 320}) v.push_back(q);
    return v;
  }();
  return levels;
}

void validate(const CodecSpec& spec) {
  switch (spec.codec) {
    case CodecKind::kMp3: {
      const auto& levels = mp3_quality_levels();
      if (std::find(levels.begin(), levels.end(), spec.quality) == levels.end()) {
        throw InvalidInput("mp3 quality " + std::to_string(spec.quality) + " is not an allowed setting");
      }
      break;
    }
    case CodecKind::kOggVorbis:
      if (spec.quality < -1 || spec.quality > 10) {
        throw InvalidInput("ogg-vorbis quality must lie in [-1, 10]");
      }
      break;
    case CodecKind::kGsm:
    case CodecKind::kPassthrough:
      break;
  }
}

std::string to_string(CodecKind kind) {
  switch (kind) {
    case CodecKind::kMp3: return "mp3";
    case CodecKind::kOggVorbis: return "ogg-vorbis";
    case CodecKind::kGsm: return "gsm";
    case CodecKind::kPassthrough: return "passthrough";
  }
  return "?";
}

CodecKind codec_from_string(const std::string& name) {
  if (name == "mp3") return CodecKind::kMp3;
  if (name == "ogg-vorbis" || name == "ogg") return CodecKind::kOggVorbis;
  if (name == "gsm") return CodecKind::kGsm;
  if (name == "passthrough") return CodecKind::kPassthrough;
  throw InvalidInput("unknown codec: " + name);
}

std::string to_string(CodecBackend backend) {
  return backend == CodecBackend::kExternal ? "external" : "builtin-approx";
}

std::string ExternalCodecConfig::container_ext(CodecKind kind) const {
  switch (kind) {
    case CodecKind::kMp3: return ".mp3";
    case CodecKind::kOggVorbis: return ".ogg";
    case CodecKind::kGsm: return ".gsm";
    case CodecKind::kPassthrough: return ".wav";
  }
  return ".bin";
}

namespace {

AudioClip fit_length(AudioClip clip, std::size_t n) {
  clip.samples.resize(n, 0.0F);
  return clip;
}

std::string first_token(const std::string& command) {
  std::istringstream in(command);
  std::string token;
  in >> token;
  return token;
}

bool executable_on_path(const std::string& name) {
  if (name.empty()) return false;
  if (name.find('/') != std::string::npos) return ::access(name.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (path == nullptr) return false;
  std::istringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    const fs::path candidate = fs::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0) return true;
  }
  return false;
}

std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
  for (std::size_t pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size())) {
    tmpl.replace(pos, key.size(), value);
  }
  return tmpl;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path unique_temp_dir() {
  static std::atomic<unsigned long> counter{0};
  std::ostringstream name;
  name << "dsq-codec-" << ::getpid() << '-' << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '-'
       << counter.fetch_add(1);
  fs::path dir = fs::temp_directory_path() / name.str();
  fs::create_directories(dir);
  return dir;
}

AudioClip run_external(const AudioClip& clip, const CodecSpec& spec, const ExternalCodecConfig& config) {
  const std::string name = to_string(spec.codec);
  const fs::path dir = unique_temp_dir();
  const fs::path input = dir / "in.wav";
  const fs::path encoded = dir / ("enc" + config.container_ext(spec.codec));
  const fs::path decoded = dir / "dec.wav";
  write_wav(input, clip, WavFormat::kPcm16);

  auto run = [&](const std::string& tmpl, const fs::path& in, const fs::path& out) {
    std::string cmd = substitute(tmpl, "{in}", quoted(in));
    cmd = substitute(cmd, "{out}", quoted(out));
    cmd = substitute(cmd, "{q}", std::to_string(spec.quality));
    if (std::system((cmd + " >/dev/null 2>&1").c_str()) != 0) {
      fs::remove_all(dir);
      throw EnvironmentError("external codec command failed: " + cmd);
    }
  };
  run(config.encode.at(name), input, encoded);
  run(config.decode.at(name), encoded, decoded);
  AudioClip out = read_wav_mono(decoded);
  fs::remove_all(dir);
  return out;
}

// Approximate encoder bandwidth at a 16 kHz input rate; 0 means full band.
double approx_bandwidth_hz(const CodecSpec& spec) {
  if (spec.codec == CodecKind::kMp3) {
    if (spec.quality <= 8) return 2000.0;
    if (spec.quality <= 16) return 3500.0;
    if (spec.quality <= 24) return 5000.0;
    if (spec.quality <= 32) return 6500.0;
    if (spec.quality <= 48) return 7500.0;
    return 0.0;
  }
  if (spec.codec == CodecKind::kOggVorbis) {
    if (spec.quality <= -1) return 3000.0;
    if (spec.quality <= 3) return 4000.0 + 1000.0 * spec.quality;
    return 0.0;
  }
  return 0.0;
}

AudioClip builtin_approx(const AudioClip& clip, const CodecSpec& spec) {
  if (spec.codec == CodecKind::kGsm) {
    AudioClip narrow = resample(clip, 8000);
    for (float& s : narrow.samples) s = alaw_round_trip(s);
    return resample(narrow, clip.sample_rate);
  }
  const double bandwidth = approx_bandwidth_hz(spec);
  if (bandwidth <= 0.0 || bandwidth >= 0.49 * clip.sample_rate) return clip;
  const auto sos = design_butterworth({4, FilterKind::kLowPass, bandwidth}, clip.sample_rate);
  return filtfilt(sos, clip);
}

}  // namespace

float alaw_round_trip(float sample) {
  // 13-bit linear input, expressed on the 16-bit scale used by G.711 tables.
  const long s13 = std::clamp(std::lround(static_cast<double>(sample) * 4096.0), -4096L, 4095L);
  int pcm = static_cast<int>(s13);
  int mask = 0xD5;
  if (pcm < 0) {
    mask = 0x55;
    pcm = -pcm - 1;
  }
  static constexpr int kSegEnd[8] = {0x1F, 0x3F, 0x7F, 0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF};
  int seg = 0;
  while (seg < 8 && pcm > kSegEnd[seg]) ++seg;
  int code = 0;
  if (seg >= 8) {
    code = 0x7F ^ mask;
  } else {
    int aval = seg << 4;
    aval |= seg < 2 ? (pcm >> 1) & 0xF : (pcm >> seg) & 0xF;
    code = aval ^ mask;
  }

  code ^= 0x55;
  int t = (code & 0xF) << 4;
  const int dseg = (code & 0x70) >> 4;
  if (dseg == 0) {
    t += 8;
  } else {
    t += 0x108;
    if (dseg > 1) t <<= dseg - 1;
  }
  const int linear16 = (code & 0x80) ? t : -t;
  return static_cast<float>(linear16) / 32768.0F;
}

bool external_codec_available(CodecKind kind, const ExternalCodecConfig& config) {
  const std::string name = to_string(kind);
  const auto enc = config.encode.find(name);
  const auto dec = config.decode.find(name);
  if (enc == config.encode.end() || dec == config.decode.end()) return false;
  return executable_on_path(first_token(enc->second)) && executable_on_path(first_token(dec->second));
}

CodecResult apply_codec(const AudioClip& clip, const CodecSpec& spec, const CodecOptions& options) {
  validate(spec);
  if (clip.sample_rate != 16000) throw InvalidInput("apply_codec: input must be 16 kHz");
  if (spec.codec == CodecKind::kPassthrough) return {clip, CodecBackend::kBuiltinApprox};

  if (options.prefer_external && external_codec_available(spec.codec, options.external)) {
    AudioClip in = spec.codec == CodecKind::kGsm ? resample(clip, 8000) : clip;
    AudioClip out = resample(run_external(in, spec, options.external), clip.sample_rate);
    return {fit_length(std::move(out), clip.size()), CodecBackend::kExternal};
  }
  if (!options.allow_fallback) {
    throw EnvironmentError("external encoder for " + to_string(spec.codec) +
                           " is unavailable and fallback is disabled");
  }
  return {fit_length(builtin_approx(clip, spec), clip.size()), CodecBackend::kBuiltinApprox};
}

}  // namespace dsq
