#include "dsq/recipe.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "dsq/degrade.hpp"
#include "dsq/error.hpp"
#include "dsq/loudness.hpp"

namespace dsq {

bool DegradationRecipe::has(StepSlot slot) const { return find(slot) != nullptr; }

const DegradationStep* DegradationRecipe::find(StepSlot slot) const {
  for (const auto& s : steps) {
    if (s.slot == slot) return &s;
  }
  return nullptr;
}

AssetCatalog AssetBank::catalog() const {
  AssetCatalog c;
  for (const auto& [id, clip] : rirs) c.rir_ids.push_back(id);
  for (const auto& [id, clip] : noises) c.noise_ids.push_back(id);
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31U);
}

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

FilterSpec draw_filter(std::mt19937_64& rng, const DegradationRanges& ranges) {
  FilterSpec f;
  f.order = pick(rng, 2) == 0 ? 2 : 4;
  f.kind = pick(rng, 2) == 0 ? FilterKind::kHighPass : FilterKind::kLowPass;
  f.cutoff_hz = uniform(rng, ranges.cutoff_min_hz, ranges.cutoff_max_hz);
  return f;
}

CodecSpec draw_codec(std::mt19937_64& rng, const DegradationRanges& ranges) {
  CodecSpec c;
  c.codec = ranges.codecs.at(pick(rng, ranges.codecs.size()));
  if (c.codec == CodecKind::kMp3) {
    const auto& levels = mp3_quality_levels();
    c.quality = levels[pick(rng, levels.size())];
  } else if (c.codec == CodecKind::kOggVorbis) {
    c.quality = -1 + static_cast<int>(pick(rng, 12));
  }
  return c;
}

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of("|;=") != std::string::npos) {
    throw InvalidInput("asset id '" + id + "' is empty or contains a reserved character");
  }
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(part);
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw InvalidInput("malformed number in recipe: " + s);
  return v;
}

int parse_int(const std::string& s) {
  std::size_t used = 0;
  const int v = std::stoi(s, &used);
  if (used != s.size()) throw InvalidInput("malformed integer in recipe: " + s);
  return v;
}

}  // namespace

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11U) * 0x1.0p-53; }

std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& segment_id, int variant_index) {
  const std::uint64_t id_hash = fnv1a64(segment_id);
  return splitmix64(master_seed ^ splitmix64(id_hash + 0x632be59bd9b4e019ULL * static_cast<std::uint64_t>(variant_index + 1)));
}

DegradationRecipe draw_recipe(std::uint64_t master_seed, const std::string& segment_id, int variant_index,
                              const AssetCatalog& catalog, const DegradationProbabilities& probs,
                              const DegradationRanges& ranges) {
  if (catalog.rir_ids.empty() || catalog.noise_ids.empty()) {
    throw InvalidInput("draw_recipe: asset catalog needs at least one RIR and one noise clip");
  }
  DegradationRecipe r;
  r.segment_id = segment_id;
  r.variant_index = variant_index;
  r.seed = derive_seed(master_seed, segment_id, variant_index);
  std::mt19937_64 rng(r.seed);

  if (uniform01(rng) < probs.filter1) r.steps.push_back({StepSlot::kFilter1, draw_filter(rng, ranges)});
  if (uniform01(rng) < probs.rir1) {
    r.steps.push_back({StepSlot::kRir1, RirSpec{catalog.rir_ids[pick(rng, catalog.rir_ids.size())]}});
  }
  if (uniform01(rng) < probs.noise) {
    NoiseSpec n;
    n.noise_id = catalog.noise_ids[pick(rng, catalog.noise_ids.size())];
    n.snr_db = uniform(rng, ranges.snr_min_db, ranges.snr_max_db);
    r.steps.push_back({StepSlot::kNoise, n});
  }
  if (uniform01(rng) < probs.filter2) r.steps.push_back({StepSlot::kFilter2, draw_filter(rng, ranges)});
  // The draw is always consumed so the stream does not depend on the RIR1 outcome.
  const bool rir2 = uniform01(rng) < probs.rir2;
  if (rir2 && !r.has(StepSlot::kRir1)) {
    r.steps.push_back({StepSlot::kRir2, RirSpec{catalog.rir_ids[pick(rng, catalog.rir_ids.size())]}});
  }
  if (uniform01(rng) < probs.codec) r.steps.push_back({StepSlot::kCodec, draw_codec(rng, ranges)});
  return r;
}

std::string slot_name(StepSlot slot) {
  switch (slot) {
    case StepSlot::kFilter1: return "F1";
    case StepSlot::kRir1: return "R1";
    case StepSlot::kNoise: return "N";
    case StepSlot::kFilter2: return "F2";
    case StepSlot::kRir2: return "R2";
    case StepSlot::kCodec: return "C";
  }
  return "?";
}

namespace {

StepSlot slot_from_name(const std::string& name) {
  for (auto s : {StepSlot::kFilter1, StepSlot::kRir1, StepSlot::kNoise, StepSlot::kFilter2, StepSlot::kRir2,
                 StepSlot::kCodec}) {
    if (slot_name(s) == name) return s;
  }
  throw InvalidInput("unknown recipe step: " + name);
}

std::string encode_params(const DegradationStep& step) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FilterSpec>) {
          return std::string(p.kind == FilterKind::kLowPass ? "lp" : "hp") + "|" + std::to_string(p.order) + "|" +
                 fixed6(p.cutoff_hz);
        } else if constexpr (std::is_same_v<T, RirSpec>) {
          return p.rir_id;
        } else if constexpr (std::is_same_v<T, NoiseSpec>) {
          return p.noise_id + "|" + fixed6(p.snr_db);
        } else {
          return to_string(p.codec) + "|" + std::to_string(p.quality);
        }
      },
      step.params);
}

}  // namespace

std::string serialize_steps(const std::vector<DegradationStep>& steps) {
  if (steps.empty()) return "none";
  std::string out;
  for (const auto& s : steps) {
    if (!out.empty()) out += ';';
    out += slot_name(s.slot) + "=" + encode_params(s);
  }
  return out;
}

std::vector<DegradationStep> parse_steps(const std::string& text) {
  std::vector<DegradationStep> steps;
  if (text == "none") return steps;
  for (const auto& item : split(text, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidInput("malformed recipe step: " + item);
    DegradationStep step;
    step.slot = slot_from_name(item.substr(0, eq));
    const auto fields = split(item.substr(eq + 1), '|');
    switch (step.slot) {
      case StepSlot::kFilter1:
      case StepSlot::kFilter2: {
        if (fields.size() != 3) throw InvalidInput("malformed filter step: " + item);
        FilterSpec f;
        if (fields[0] != "lp" && fields[0] != "hp") throw InvalidInput("unknown filter kind: " + fields[0]);
        f.kind = fields[0] == "lp" ? FilterKind::kLowPass : FilterKind::kHighPass;
        f.order = parse_int(fields[1]);
        f.cutoff_hz = parse_double(fields[2]);
        step.params = f;
        break;
      }
      case StepSlot::kRir1:
      case StepSlot::kRir2:
        if (fields.size() != 1) throw InvalidInput("malformed RIR step: " + item);
        step.params = RirSpec{fields[0]};
        break;
      case StepSlot::kNoise:
        if (fields.size() != 2) throw InvalidInput("malformed noise step: " + item);
        step.params = NoiseSpec{fields[0], parse_double(fields[1])};
        break;
      case StepSlot::kCodec: {
        if (fields.size() != 2) throw InvalidInput("malformed codec step: " + item);
        CodecSpec c{codec_from_string(fields[0]), parse_int(fields[1])};
        validate(c);
        step.params = c;
        break;
      }
    }
    if (!steps.empty() && static_cast<int>(step.slot) <= static_cast<int>(steps.back().slot)) {
      throw InvalidInput("recipe steps out of canonical order: " + text);
    }
    steps.push_back(std::move(step));
  }
  return steps;
}

AppliedRecipe apply_recipe(const AudioClip& clip, const DegradationRecipe& recipe, const AssetBank& assets,
                           const CodecOptions& codec_options) {
  AppliedRecipe result;
  AudioClip x = clip;
  for (const auto& step : recipe.steps) {
    try {
      std::visit(
          [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, FilterSpec>) {
              x = filtfilt(design_butterworth(p, x.sample_rate), x);
            } else if constexpr (std::is_same_v<T, RirSpec>) {
              const auto it = assets.rirs.find(p.rir_id);
              if (it == assets.rirs.end()) throw InvalidInput("unknown RIR id " + p.rir_id);
              x = convolve_rir(x, it->second);
            } else if constexpr (std::is_same_v<T, NoiseSpec>) {
              const auto it = assets.noises.find(p.noise_id);
              if (it == assets.noises.end()) throw InvalidInput("unknown noise id " + p.noise_id);
              if (it->second.size() < x.size()) throw InvalidInput("noise clip shorter than segment");
              AudioClip noise = it->second;
              noise.samples.resize(x.size());
              x = mix_noise(x, noise, p.snr_db);
            } else {
              auto coded = apply_codec(x, p, codec_options);
              x = std::move(coded.clip);
              result.codec_backend = coded.backend;
            }
          },
          step.params);
    } catch (const EnvironmentError& e) {
      throw EnvironmentError("step " + slot_name(step.slot) + " (" + encode_params(step) + "): " + e.what());
    } catch (const std::exception& e) {
      throw InvalidInput("step " + slot_name(step.slot) + " (" + encode_params(step) + "): " + e.what());
    }
  }
  try {
    result.clip = normalize_lufs(x, kTargetLufs);
  } catch (const Unmeasurable&) {
    // Everything fell below the absolute gate; keep the chain output at its own level.
    result.clip = std::move(x);
    result.loudness_normalized = false;
  }
  return result;
}

std::string make_pair_id(const std::string& segment_id, int variant_index) {
  return segment_id + "#v" + std::to_string(variant_index);
}

std::vector<PairStub> generate_pairs(const std::vector<std::string>& segment_ids, std::uint64_t master_seed,
                                     int variants, const AssetCatalog& catalog,
                                     const DegradationProbabilities& probs, const DegradationRanges& ranges) {
  for (const auto& id : catalog.rir_ids) check_id(id);
  for (const auto& id : catalog.noise_ids) check_id(id);
  std::vector<PairStub> out;
  if (variants <= 0) return out;
  out.reserve(segment_ids.size() * static_cast<std::size_t>(variants));
  for (const auto& seg : segment_ids) {
    for (int v = 0; v < variants; ++v) {
      PairStub stub;
      stub.pair_id = make_pair_id(seg, v);
      stub.clean_segment_id = seg;
      stub.recipe = draw_recipe(master_seed, seg, v, catalog, probs, ranges);
      out.push_back(std::move(stub));
    }
  }
  return out;
}

}  // namespace dsq
