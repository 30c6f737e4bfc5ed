#include "dsq/pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dsq/wav.hpp"

namespace dsq::pipeline {
namespace {

namespace fs = std::filesystem;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Two-pole resonator with approximately unit peak gain.
struct Resonator {
  double a1 = 0, a2 = 0, gain = 1, y1 = 0, y2 = 0;

  void set(double freq, double bandwidth, int sr) {
    const double r = std::exp(-std::numbers::pi * bandwidth / sr);
    a1 = -2.0 * r * std::cos(2.0 * std::numbers::pi * freq / sr);
    a2 = r * r;
    gain = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(4.0 * std::numbers::pi * freq / sr) + r * r);
  }
  double operator()(double x) {
    const double y = gain * x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void normalize_peak(AudioClip& clip, double peak) {
  float mx = 0.0F;
  for (float s : clip.samples) mx = std::max(mx, std::abs(s));
  if (mx > 0.0F) {
    const auto g = static_cast<float>(peak / mx);
    for (float& s : clip.samples) s *= g;
  }
}

}  // namespace

AudioClip synth_speech(double seconds, int sr, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(seconds * sr);
  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.assign(n, 0.0F);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double base_f0 = uniform(rng, 95.0, 230.0);
  const double lead = uniform(rng, 0.2, 0.4), tail = uniform(rng, 0.2, 0.4);
  auto pos = static_cast<std::size_t>(lead * sr);
  const auto stop = n - static_cast<std::size_t>(tail * sr);

  Resonator f1, f2, f3, fric;
  double phase = 0.0, prev = 0.0;
  while (pos < stop) {
    const bool voiced = uniform(rng, 0, 1) < 0.8;
    const auto len = std::min(stop - pos, static_cast<std::size_t>(uniform(rng, 0.12, 0.3) * sr));
    const double formant1 = uniform(rng, 300, 850), formant2 = uniform(rng, 900, 2400),
                 formant3 = uniform(rng, 2500, 3400);
    f1.set(formant1, 80, sr);
    f2.set(formant2, 120, sr);
    f3.set(formant3, 180, sr);
    fric.set(uniform(rng, 3500, 6500), 2000, sr);
    const double f0_start = base_f0 * uniform(rng, 0.85, 1.15), f0_end = base_f0 * uniform(rng, 0.85, 1.15);
    const double level = uniform(rng, 0.5, 1.0);
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(len);
      const double env = level * std::sin(std::numbers::pi * t);
      double y;
      if (voiced) {
        const double f0 = f0_start + (f0_end - f0_start) * t;
        phase += f0 / sr;
        phase -= std::floor(phase);
        const double excitation = 2.0 * phase - 1.0 + 0.02 * gauss(rng);
        y = f1(excitation) + 0.7 * f2(excitation) + 0.4 * f3(excitation);
      } else {
        y = 0.6 * fric(gauss(rng));
      }
      // First difference approximates lip radiation and keeps energy above 4 kHz.
      const double out = env * (y - 0.9 * prev);
      prev = y;
      clip.samples[pos + i] = static_cast<float>(out);
    }
    pos += len;
    const double gap = uniform(rng, 0, 1) < 0.15 ? uniform(rng, 0.15, 0.35) : uniform(rng, 0.02, 0.08);
    pos += static_cast<std::size_t>(gap * sr);
  }
  normalize_peak(clip, 0.5);
  for (float& s : clip.samples) s += static_cast<float>(1e-4 * gauss(rng));
  return clip;
}

AudioClip synth_noise(int kind, double seconds, int sr, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(seconds * sr);
  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.resize(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (kind % 6) {
    case 0:  // white
      for (auto& s : clip.samples) s = static_cast<float>(gauss(rng));
      break;
    case 1: {  // pink (Kellet filter)
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (auto& s : clip.samples) {
        const double w = gauss(rng);
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        s = static_cast<float>(b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362);
        b6 = w * 0.115926;
      }
      break;
    }
    case 2: {  // brown
      double acc = 0.0;
      for (auto& s : clip.samples) {
        acc = 0.995 * acc + 0.1 * gauss(rng);
        s = static_cast<float>(acc);
      }
      break;
    }
    case 3: {  // babble
      std::fill(clip.samples.begin(), clip.samples.end(), 0.0F);
      for (int talker = 0; talker < 5; ++talker) {
        const AudioClip v = synth_speech(seconds, sr, rng);
        for (std::size_t i = 0; i < n; ++i) clip.samples[i] += v.samples[i];
      }
      break;
    }
    case 4: {  // mains hum with harmonics over a faint floor
      const double mains = uniform(rng, 0, 1) < 0.5 ? 50.0 : 60.0;
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.05 * gauss(rng);
        for (int h = 1; h <= 8; ++h) v += std::sin(2.0 * std::numbers::pi * mains * h * i / sr) / h;
        clip.samples[i] = static_cast<float>(v);
      }
      break;
    }
    default: {  // band-limited hiss
      Resonator r;
      r.set(uniform(rng, 1000, 5000), uniform(rng, 500, 2500), sr);
      for (auto& s : clip.samples) s = static_cast<float>(r(gauss(rng)));
      break;
    }
  }
  normalize_peak(clip, 0.5);
  return clip;
}

AudioClip synth_rir(double rt60_s, int sr, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(rt60_s * sr);
  AudioClip rir;
  rir.sample_rate = sr;
  rir.samples.assign(n, 0.0F);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto predelay = static_cast<std::size_t>(uniform(rng, 0.002, 0.01) * sr);
  rir.samples[0] = 1.0F;
  for (std::size_t i = predelay; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    rir.samples[i] += static_cast<float>(0.3 * gauss(rng) * std::exp(-6.908 * t / rt60_s));
  }
  return rir;
}

void synth_corpus(const fs::path& root, const SynthOptions& o) {
  std::mt19937_64 rng(o.seed);
  fs::create_directories(root / "corpus");
  fs::create_directories(root / "rirs");
  fs::create_directories(root / "noises");

  char name[64];
  for (int i = 0; i < o.n_sources; ++i) {
    const double seconds = uniform(rng, o.min_duration_s, o.max_duration_s);
    int sr = 16000;
    bool stereo = false;
    if (o.vary_formats) {
      if (i % 7 == 3) sr = 22050;
      if (i % 11 == 5) sr = 44100;
      stereo = i % 5 == 2;
    }
    AudioClip clip = synth_speech(seconds, sr, rng);
    std::snprintf(name, sizeof name, "spk%02d", i % 10);
    fs::create_directories(root / "corpus" / name);
    std::snprintf(name, sizeof name, "spk%02d/utt%04d.wav", i % 10, i);
    if (stereo) {
      MultiChannelAudio mc;
      mc.sample_rate = sr;
      mc.channels = {clip.samples, clip.samples};
      for (float& s : mc.channels[1]) s *= 0.8F;
      write_wav(root / "corpus" / name, mc);
    } else {
      write_wav(root / "corpus" / name, clip);
    }
  }
  if (o.include_short_file) {
    fs::create_directories(root / "corpus" / "short");
    write_wav(root / "corpus" / "short" / "utt_short.wav", synth_speech(3.0, 16000, rng));
  }
  for (int i = 0; i < o.n_noises; ++i) {
    std::snprintf(name, sizeof name, "noise%02d.wav", i);
    write_wav(root / "noises" / name, synth_noise(i, o.noise_duration_s, 16000, rng));
  }
  for (int i = 0; i < o.n_rirs; ++i) {
    const double rt60 = 0.2 + 0.8 * (o.n_rirs > 1 ? static_cast<double>(i) / (o.n_rirs - 1) : 0.5);
    std::snprintf(name, sizeof name, "rir%02d.wav", i);
    write_wav(root / "rirs" / name, synth_rir(rt60, 16000, rng));
  }
}

}  // namespace dsq::pipeline
