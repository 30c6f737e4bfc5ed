#include "dsq/pipeline/commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "dsq/audio.hpp"
#include "dsq/embed.hpp"
#include "dsq/embedding_store.hpp"
#include "dsq/error.hpp"
#include "dsq/loudness.hpp"
#include "dsq/metrics.hpp"
#include "dsq/nn/checkpoint.hpp"
#include "dsq/nn/train.hpp"
#include "dsq/recipe.hpp"
#include "dsq/report.hpp"
#include "dsq/stats.hpp"
#include "dsq/wav.hpp"

namespace dsq::pipeline {
namespace {

using nlohmann::json;

// Runs fn(i) for i in [0, n) on up to `workers` threads. fn must handle its own
// per-item errors; anything it lets escape is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  std::vector<fs::path> files;
  if (dir.empty()) return files;
  if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Relative path without extension, always with '/' separators.
std::string relative_id(const fs::path& file, const fs::path& root) {
  fs::path rel = file.lexically_relative(root);
  rel.replace_extension();
  return rel.generic_string();
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.find_first_of("|;=#") == std::string::npos;
}

void write_snapshot(const RunLayout& layout, const std::string& stage, const RunConfig& config) {
  fs::create_directories(layout.snapshot(stage).parent_path());
  std::ofstream out(layout.snapshot(stage), std::ios::trunc);
  out << to_json(config).dump(2) << '\n';
}

std::string rel_to_root(const fs::path& p, const RunLayout& layout) {
  return p.lexically_relative(layout.root).generic_string();
}

fs::path from_root(const std::string& rel, const RunLayout& layout) {
  fs::path p = rel;
  return p.is_absolute() ? p : layout.root / p;
}

std::string segment_id_for(const std::string& source_id, double offset_s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ":%07lld", static_cast<long long>(std::llround(offset_s * 1000.0)));
  return source_id + buf;
}

AudioClip load_asset(const fs::path& path) {
  AudioClip clip = read_wav_mono(path);
  validate(clip);
  if (clip.sample_rate != 16000) clip = resample(clip, 16000);
  return clip;
}

AssetBank load_assets(const RunConfig& config) {
  AssetBank bank;
  const auto window = static_cast<std::size_t>(std::llround(config.segment.window_s * config.segment.sample_rate));
  for (const auto& f : list_wavs(config.rir_dir)) {
    const std::string id = relative_id(f, config.rir_dir);
    if (!valid_id(id)) throw InvalidInput("RIR id '" + id + "' contains a reserved character");
    bank.rirs.emplace(id, load_asset(f));
  }
  for (const auto& f : list_wavs(config.noise_dir)) {
    const std::string id = relative_id(f, config.noise_dir);
    if (!valid_id(id)) throw InvalidInput("noise id '" + id + "' contains a reserved character");
    AudioClip clip = load_asset(f);
    if (clip.size() < window) {
      throw InvalidInput("noise asset " + f.string() + " is shorter than the segment window");
    }
    bank.noises.emplace(id, std::move(clip));
  }
  return bank;
}

std::map<std::string, std::string> load_transcripts(const fs::path& path) {
  std::map<std::string, std::string> out;
  if (path.empty()) return out;
  for (const auto& r : read_jsonl(path)) {
    std::string id;
    for (const char* key : {"segment_id", "pair_id", "id"}) {
      if (r.contains(key)) {
        id = r.at(key).get<std::string>();
        break;
      }
    }
    const char* text_key = r.contains("transcript") ? "transcript" : "text";
    if (id.empty() || !r.contains(text_key)) continue;
    out[id] = normalize_transcript(r.at(text_key).get<std::string>());
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json test_json(const TestResult& t) {
  json j{{"n", t.n}, {"degenerate", t.degenerate}};
  j["statistic"] = t.degenerate ? json(nullptr) : json(t.statistic);
  j["p"] = t.degenerate ? json(nullptr) : json(t.p_value);
  if (t.corrected_p) j["corrected_p"] = *t.corrected_p;
  return j;
}

std::optional<double> number(const Record& r, const char* key) {
  if (!r.contains(key) || !r.at(key).is_number()) return std::nullopt;
  return r.at(key).get<double>();
}

bool in_partition(const Record& r, const CommandOptions& options) {
  return !options.partition || r.value("partition", std::string()) == *options.partition;
}

// Embedding lookup over one or more stores sharing a provider.
struct StoreSet {
  std::string provider_id;
  std::vector<EmbeddingStore> stores;

  std::optional<Embedding> get(const std::string& id) const {
    for (const auto& s : stores) {
      if (s.contains(id)) return s.get(id);
    }
    return std::nullopt;
  }
};

StoreSet load_stores(const std::vector<fs::path>& paths) {
  StoreSet set;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw EnvironmentError("embedding store not found: " + p.string());
    set.stores.push_back(EmbeddingStore::read(p));
    const auto& pid = set.stores.back().provider_id();
    if (set.provider_id.empty()) {
      set.provider_id = pid;
    } else if (pid != set.provider_id) {
      throw InvalidInput("embedding stores mix providers '" + set.provider_id + "' and '" + pid + "'");
    }
  }
  return set;
}

void check_provider_override(const CommandOptions& options, const std::string& resolved) {
  if (!options.provider) return;
  if (*options.provider == resolved) return;
  if (*options.provider == "builtin" && resolved == BuiltinEmbedderConfig{}.provider_id()) return;
  throw InvalidInput("requested provider '" + *options.provider + "' but the configured embeddings come from '" +
                     resolved + "'");
}

}  // namespace

RunLayout::RunLayout(fs::path root_dir) : root(std::move(root_dir)) {}

RunConfig apply_overrides(RunConfig config, const CommandOptions& options) {
  if (options.seed) config.master_seed = *options.seed;
  if (options.workers) {
    if (*options.workers < 1) throw InvalidInput("--workers must be >= 1");
    config.workers = *options.workers;
    config.train.threads = *options.workers;
  }
  if (options.partition && *options.partition != "train" && *options.partition != "validation" &&
      *options.partition != "test") {
    throw InvalidInput("--partition must be train, validation or test");
  }
  return config;
}

std::string partition_for(const std::string& source_id, const PartitionConfig& partitions) {
  // FNV-1a alone leaves the high bits clustered for ids that differ in one character.
  const double u = static_cast<double>(splitmix64(fnv1a64(source_id)) >> 11) * 0x1.0p-53;
  if (u < partitions.test) return "test";
  if (u < partitions.test + partitions.validation) return "validation";
  return "train";
}

// ---------------------------------------------------------------------------

PrepareSummary cmd_prepare(const RunConfig& config, const CommandOptions& options) {
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "prepare", config);
  if (config.corpus_dir.empty() || !fs::is_directory(config.corpus_dir)) {
    throw InvalidInput("corpus_dir is not a readable directory: " + config.corpus_dir.string());
  }
  (void)options;
  const auto files = list_wavs(config.corpus_dir);
  if (files.empty()) spdlog::warn("corpus {} contains no WAV files", config.corpus_dir.string());

  fs::remove_all(layout.segments_dir());
  fs::create_directories(layout.segments_dir());

  const int sr = config.segment.sample_rate;
  const auto window = static_cast<std::size_t>(std::llround(config.segment.window_s * sr));

  struct SourceResult {
    std::vector<Record> segments;
    std::vector<Record> exclusions;
    std::string content_hash;
  };
  std::vector<SourceResult> results(files.size());

  parallel_for(files.size(), config.workers, [&](std::size_t i) {
    const fs::path& file = files[i];
    const std::string source_id = relative_id(file, config.corpus_dir);
    auto& res = results[i];
    const std::string source_path = file.lexically_relative(config.corpus_dir).generic_string();
    auto exclude = [&](const std::string& reason, const std::string& id) {
      res.exclusions.push_back(
          {{"segment_id", id}, {"source_id", source_id}, {"source_path", source_path}, {"excluded_reason", reason}});
    };
    if (!valid_id(source_id)) {
      exclude("source id contains a reserved character (| ; = #)", source_id);
      return;
    }
    try {
      AudioClip clip = read_wav_mono(file);
      validate(clip);
      if (clip.sample_rate != sr) clip = resample(clip, sr);
      res.content_hash = std::to_string(fnv1a64(std::string_view(
          reinterpret_cast<const char*>(clip.samples.data()), clip.samples.size() * sizeof(float))));
      TrimOptions trim;
      trim.threshold_db = config.segment.trim_threshold_db;
      const TrimResult trimmed = trim_silence(clip, trim);
      if (trimmed.all_silent || trimmed.clip.size() < window) {
        exclude(trimmed.all_silent ? "silent" : "shorter than the segment window after trimming", source_id);
        return;
      }
      const std::string partition = partition_for(source_id, config.partitions);
      for (auto& seg : segment(trimmed.clip, source_id, config.segment.window_s, config.segment.hop_s)) {
        const std::string id = segment_id_for(source_id, seg.offset_s);
        AudioClip normalized;
        const std::optional<double> lufs_before = measure_lufs(seg.clip);
        try {
          normalized = normalize_lufs(seg.clip, config.segment.target_lufs);
        } catch (const Unmeasurable& e) {
          exclude(std::string("loudness unmeasurable: ") + e.what(), id);
          continue;
        }
        const fs::path out = layout.segments_dir() / (id_to_filename(id) + ".wav");
        write_wav(out, normalized);
        res.segments.push_back({{"segment_id", id},
                                {"source_id", source_id},
                                {"source_path", source_path},
                                {"offset_s", seg.offset_s},
                                {"duration_s", normalized.duration_s()},
                                {"lufs_before", lufs_before.value_or(0.0)},
                                {"path", rel_to_root(out, layout)},
                                {"partition", partition}});
      }
    } catch (const InvalidInput& e) {
      spdlog::warn("skipping {}: {}", file.string(), e.what());
      exclude(std::string("unreadable: ") + e.what(), source_id);
    }
  });

  PrepareSummary summary;
  summary.sources = files.size();
  std::vector<Record> segments, exclusions;
  std::map<std::string, std::string> seen;  // content hash -> first source id
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto& res = results[i];
    if (!res.content_hash.empty() && !res.segments.empty()) {
      const std::string source_id = res.segments.front().at("source_id");
      auto [it, inserted] = seen.emplace(res.content_hash, source_id);
      if (!inserted) {
        spdlog::warn("{} duplicates {}; skipped", source_id, it->second);
        for (const auto& s : res.segments) fs::remove(from_root(s.at("path"), layout));
        exclusions.push_back({{"segment_id", source_id},
                              {"source_id", source_id},
                              {"source_path", files[i].lexically_relative(config.corpus_dir).generic_string()},
                              {"excluded_reason", "duplicate of " + it->second}});
        res.segments.clear();
      }
    }
    for (auto& s : res.segments) segments.push_back(std::move(s));
    for (auto& e : res.exclusions) exclusions.push_back(std::move(e));
  }
  sort_by_id(segments, "segment_id");
  std::stable_sort(exclusions.begin(), exclusions.end(),
                   [](const Record& a, const Record& b) { return a.at("segment_id") < b.at("segment_id"); });
  write_jsonl(layout.segments(), segments);
  write_jsonl(layout.exclusions(), exclusions);
  summary.segments = segments.size();
  summary.excluded = exclusions.size();
  spdlog::info("prepare: {} sources -> {} segments ({} exclusions)", summary.sources, summary.segments,
               summary.excluded);
  return summary;
}

// ---------------------------------------------------------------------------

DegradeSummary cmd_degrade(const RunConfig& config, const CommandOptions& options) {
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "degrade", config);
  const auto segments = read_jsonl(layout.segments());
  std::map<std::string, const Record*> by_id;
  std::vector<std::string> ids;
  for (const auto& s : segments) {
    ids.push_back(s.at("segment_id"));
    by_id[ids.back()] = &s;
  }
  const AssetBank assets = load_assets(config);
  const auto stubs = generate_pairs(ids, config.master_seed, config.variants, assets.catalog(),
                                    config.probabilities, config.ranges);

  // Previously completed pairs, reusable when the recipe and audio hash still match.
  std::map<std::string, Record> journal;
  if (options.resume && fs::exists(layout.pairs_journal())) {
    std::ifstream in(layout.pairs_journal());
    std::string line;
    while (std::getline(in, line)) {
      try {
        Record r = Record::parse(line);
        std::string id = r.at("pair_id").get<std::string>();
        journal[std::move(id)] = std::move(r);
      } catch (const json::exception&) {
        // A torn final line from an interrupted run; that pair is redone.
      }
    }
  }
  if (!options.resume) fs::remove_all(layout.degraded_dir());
  fs::create_directories(layout.degraded_dir());
  fs::create_directories(layout.pairs_journal().parent_path());
  std::ofstream journal_out(layout.pairs_journal(), options.resume ? std::ios::app : std::ios::trunc);
  std::mutex journal_mutex;

  std::vector<std::optional<Record>> records(stubs.size());
  std::vector<std::optional<Record>> failures(stubs.size());
  std::atomic<std::size_t> reused{0};

  parallel_for(stubs.size(), config.workers, [&](std::size_t i) {
    const PairStub& stub = stubs[i];
    const std::string recipe_text = serialize_steps(stub.recipe.steps);
    const fs::path out = layout.degraded_dir() / (id_to_filename(stub.pair_id) + ".wav");

    if (auto it = journal.find(stub.pair_id); it != journal.end()) {
      const Record& prev = it->second;
      if (prev.value("recipe", std::string()) == recipe_text && fs::exists(out) &&
          prev.value("audio_hash", std::string()) == file_hash(out)) {
        records[i] = prev;
        ++reused;
        return;
      }
    }

    const Record& seg = *by_id.at(stub.clean_segment_id);
    try {
      const AudioClip clean = read_wav_mono(from_root(seg.at("path"), layout));
      const AppliedRecipe applied = apply_recipe(clean, stub.recipe, assets, config.codec);
      write_wav(out, applied.clip);

      Record r{{"pair_id", stub.pair_id},
               {"clean_segment_id", stub.clean_segment_id},
               {"source_id", seg.at("source_id")},
               {"partition", seg.at("partition")},
               {"variant", stub.recipe.variant_index},
               {"seed", stub.recipe.seed},
               {"recipe", recipe_text},
               {"degraded_path", rel_to_root(out, layout)},
               {"audio_hash", file_hash(out)}};
      if (!applied.loudness_normalized) {
        r["loudness_normalized"] = false;
        spdlog::warn("pair {} (recipe {}) is below the loudness gate; kept unnormalized", stub.pair_id, recipe_text);
      }
      r["codec_backend"] = applied.codec_backend ? json(to_string(*applied.codec_backend)) : json(nullptr);
      try {
        r["si_sdr"] = si_sdr(applied.clip.samples, clean.samples);
      } catch (const InvalidInput&) {
        r["si_sdr"] = nullptr;
      }
      if (const auto* noise = stub.recipe.find(StepSlot::kNoise)) {
        r["snr_db"] = std::get<NoiseSpec>(noise->params).snr_db;
      }
      {
        std::lock_guard lock(journal_mutex);
        journal_out << r.dump() << '\n';
        journal_out.flush();
      }
      records[i] = std::move(r);
    } catch (const EnvironmentError&) {
      throw;
    } catch (const std::exception& e) {
      spdlog::warn("pair {} failed (recipe {}): {}", stub.pair_id, recipe_text, e.what());
      failures[i] = Record{{"pair_id", stub.pair_id}, {"recipe", recipe_text}, {"error", e.what()}};
    }
  });
  journal_out.close();

  std::vector<Record> out_records, out_failures;
  for (auto& r : records) {
    if (r) out_records.push_back(std::move(*r));
  }
  for (auto& f : failures) {
    if (f) out_failures.push_back(std::move(*f));
  }
  sort_by_id(out_records, "pair_id");
  sort_by_id(out_failures, "pair_id");
  write_jsonl(layout.pairs(), out_records);
  write_jsonl(layout.degrade_failures(), out_failures);
  fs::remove(layout.pairs_journal());

  DegradeSummary summary{out_records.size(), reused.load(), out_failures.size()};
  spdlog::info("degrade: {} pairs ({} reused, {} failed)", summary.pairs, summary.reused, summary.failed);
  return summary;
}

// ---------------------------------------------------------------------------

IndexSummary cmd_index(const RunConfig& config, const CommandOptions& options) {
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "index", config);
  auto pairs = read_jsonl(layout.pairs());
  const auto segments = read_jsonl(layout.segments());

  StoreSet stores;
  if (config.embedding.provider == "store") {
    stores = load_stores(config.embedding.stores);
  } else {
    const BuiltinEmbedderConfig builtin;
    const auto dim = static_cast<std::uint32_t>(2 * builtin.n_mels);
    std::vector<std::pair<std::string, fs::path>> jobs;
    for (const auto& s : segments) jobs.emplace_back(s.at("segment_id"), from_root(s.at("path"), layout));
    for (const auto& p : pairs) jobs.emplace_back(p.at("pair_id"), from_root(p.at("degraded_path"), layout));
    std::vector<std::optional<std::vector<float>>> vectors(jobs.size());
    parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
      try {
        vectors[i] = builtin_embed(read_wav_mono(jobs[i].second), builtin).values;
      } catch (const InvalidInput& e) {
        spdlog::warn("no embedding for {}: {}", jobs[i].first, e.what());
      }
    });
    EmbeddingStore store(builtin.provider_id(), dim);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (vectors[i]) store.add(jobs[i].first, std::move(*vectors[i]));
    }
    fs::create_directories(layout.builtin_store().parent_path());
    store.write(layout.builtin_store());
    stores.provider_id = store.provider_id();
    stores.stores.push_back(std::move(store));
  }
  check_provider_override(options, stores.provider_id);

  IndexSummary summary;
  summary.provider_id = stores.provider_id;
  std::vector<double> train_distances;
  for (auto& p : pairs) {
    const auto clean = stores.get(p.at("clean_segment_id"));
    const auto degraded = stores.get(p.at("pair_id"));
    p.erase("index_error");
    if (!clean || !degraded) {
      p["index_error"] = "missing embedding for " + std::string(!clean ? "clean segment" : "degraded audio");
      ++summary.missing;
      continue;
    }
    try {
      p["embedding_distance"] = cosine_distance(*clean, *degraded);
    } catch (const InvalidInput& e) {
      p["index_error"] = e.what();
      ++summary.missing;
      continue;
    }
    if (p.at("partition") == "train") train_distances.push_back(p.at("embedding_distance").get<double>());
  }
  if (train_distances.empty()) throw InvalidInput("index: no train-partition pairs with embeddings");
  const IndexScale scale = compute_scale(train_distances);
  summary.scale = scale.scale;
  for (auto& p : pairs) {
    p["provider_id"] = stores.provider_id;
    p["index_scale"] = scale.scale;
    if (p.contains("embedding_distance")) {
      p["degradation_index"] = degradation_index(p.at("embedding_distance").get<double>(), scale);
      ++summary.indexed;
    }
  }
  write_jsonl(layout.indexed(), pairs);
  spdlog::info("index: {} pairs indexed, {} missing, scale {:.6f} ({})", summary.indexed, summary.missing,
               summary.scale, summary.provider_id);
  return summary;
}

// ---------------------------------------------------------------------------

TrainSummary cmd_train(const RunConfig& config, const CommandOptions& options) {
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "train", config);
  const auto pairs = read_jsonl(layout.indexed());

  std::map<std::string, std::set<std::string>> partitions_of;
  for (const auto& p : pairs) partitions_of[p.at("source_id")].insert(p.at("partition").get<std::string>());
  for (const auto& [source, parts] : partitions_of) {
    if (parts.size() > 1) {
      std::string list;
      for (const auto& s : parts) list += (list.empty() ? "" : ", ") + s;
      throw InvalidInput("partition leakage: clean source '" + source + "' appears in " + list);
    }
  }

  std::vector<nn::TrainExample> train_set, val_set;
  double scale = 0.0;
  for (const auto& p : pairs) {
    if (!p.contains("degradation_index")) continue;
    const std::string part = p.at("partition");
    if (part != "train" && part != "validation") continue;
    nn::TrainExample ex;
    ex.id = p.at("pair_id");
    ex.clip = read_wav_mono(from_root(p.at("degraded_path"), layout));
    ex.target = p.at("degradation_index").get<float>();
    ex.provider_id = p.at("provider_id");
    scale = p.at("index_scale").get<double>();
    (part == "train" ? train_set : val_set).push_back(std::move(ex));
  }
  if (options.provider && !train_set.empty()) check_provider_override(options, train_set.front().provider_id);

  fs::create_directories(layout.checkpoint().parent_path());
  std::ofstream log(layout.train_log(), std::ios::trunc);
  const auto ckpt = nn::train(train_set, val_set, config.model, config.train, scale, [&](const nn::EpochRecord& r) {
    log << json(r).dump() << '\n';
    log.flush();
    spdlog::info("epoch {:3d}  train {:.6f}  val {:.6f}  lr {:.3e}", r.epoch, r.train_loss, r.val_loss, r.lr);
  });
  nn::save_checkpoint(layout.checkpoint(), ckpt);

  TrainSummary summary;
  summary.train_pairs = train_set.size();
  summary.validation_pairs = val_set.size();
  summary.epoch_of_best = ckpt.epoch_of_best;
  summary.best_val_loss = ckpt.best_val_loss;
  spdlog::info("train: best epoch {} (val loss {:.6f})", summary.epoch_of_best, summary.best_val_loss);
  return summary;
}

// ---------------------------------------------------------------------------

ScoreSummary cmd_score(const RunConfig& config, const CommandOptions& options) {
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "score", config);
  const nn::Checkpoint ckpt = [&] {
    try {
      return nn::load_checkpoint(layout.checkpoint());
    } catch (const InvalidInput& e) {
      throw EnvironmentError(std::string("model load failed: ") + e.what());
    }
  }();

  const bool external = !options.manifest.empty();
  const fs::path input = external ? options.manifest : layout.indexed();
  auto pairs = read_jsonl(input);

  ScoreSummary summary;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].erase("model_score");
    pairs[i].erase("score_error");
    if (in_partition(pairs[i], options)) todo.push_back(i);
  }
  std::vector<std::string> errors(todo.size());
  parallel_for(todo.size(), config.workers, [&](std::size_t k) {
    auto& p = pairs[todo[k]];
    try {
      const AudioClip clip = read_wav_mono(from_root(p.at("degraded_path"), layout));
      p["model_score"] = ckpt.model->score(clip);
    } catch (const InvalidInput& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t k = 0; k < todo.size(); ++k) {
    if (errors[k].empty()) {
      ++summary.scored;
    } else {
      pairs[todo[k]]["score_error"] = errors[k];
      ++summary.failed;
    }
  }
  if (!pairs.empty() && pairs.front().contains("provider_id") &&
      pairs.front().at("provider_id") != ckpt.provider_id) {
    spdlog::warn("checkpoint targets came from '{}' but the manifest uses '{}'", ckpt.provider_id,
                 pairs.front().at("provider_id").get<std::string>());
  }

  fs::path output = layout.scored();
  if (external) output = input.parent_path() / (input.stem().string() + ".scored.jsonl");
  write_jsonl(output, pairs);

  if (!external && fs::exists(layout.segments())) {
    auto segments = read_jsonl(layout.segments());
    std::vector<Record> out;
    for (const auto& s : segments) {
      if (in_partition(s, options)) out.push_back({{"segment_id", s.at("segment_id")}, {"source_id", s.at("source_id")},
                                                   {"partition", s.at("partition")}, {"path", s.at("path")}});
    }
    parallel_for(out.size(), config.workers, [&](std::size_t i) {
      try {
        out[i]["model_score"] = ckpt.model->score(read_wav_mono(from_root(out[i].at("path"), layout)));
      } catch (const InvalidInput& e) {
        out[i]["score_error"] = e.what();
      }
    });
    for (const auto& s : out) summary.clean_scored += s.contains("model_score") ? 1 : 0;
    write_jsonl(layout.segment_scores(), out);
  }
  spdlog::info("score: {} scored, {} failed, {} clean segments", summary.scored, summary.failed,
               summary.clean_scored);
  return summary;
}

// ---------------------------------------------------------------------------

EvaluateSummary cmd_evaluate(const RunConfig& config, const CommandOptions& options) {
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "evaluate", config);
  const bool external = !options.manifest.empty();
  fs::path input = options.manifest;
  if (!external) input = fs::exists(layout.scored()) ? layout.scored() : layout.indexed();
  std::vector<Record> rows;
  for (auto& r : read_jsonl(input)) {
    if (in_partition(r, options)) rows.push_back(std::move(r));
  }
  const fs::path reports = external ? layout.reports_dir() / input.stem() : layout.reports_dir();
  fs::create_directories(reports);
  EvaluateSummary summary;

  // (a) model score vs degradation index, per partition and overall.
  {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_part;
    for (const auto& r : rows) {
      const auto score = number(r, "model_score");
      const auto target = number(r, "degradation_index");
      if (!score || !target) continue;
      auto add = [&](const std::string& part) {
        by_part[part].first.push_back(*score);
        by_part[part].second.push_back(*target);
      };
      if (r.contains("partition")) {
        const std::string part = r.at("partition").get<std::string>();
        add(part);
        if (part == "validation" || part == "test") add("held-out");
      }
      add("all");
    }
    std::vector<Record> out;
    for (const auto& [part, xy] : by_part) {
      if (part == "all" && by_part.size() == 2) continue;  // identical to the single partition
      PartitionAgreement a;
      a.partition = part;
      a.n = xy.first.size();
      a.mae = mae(xy.first, xy.second);
      a.spearman = xy.first.size() >= 3 ? spearman(xy.first, xy.second) : TestResult{0, 1, a.n, {}, true};
      json rec{{"partition", part}, {"n", a.n}, {"mae", a.mae}, {"spearman", test_json(a.spearman)}};
      out.push_back(rec);
      summary.agreement.push_back(a);
    }
    write_jsonl(reports / "score_vs_target.jsonl", out);
  }

  // Score distributions: clean segments vs strongly noise-degraded pairs.
  {
    std::vector<double> clean, noisy;
    if (!external && fs::exists(layout.segment_scores())) {
      for (const auto& s : read_jsonl(layout.segment_scores())) {
        if (!in_partition(s, options)) continue;
        if (auto v = number(s, "model_score")) clean.push_back(*v);
      }
    }
    for (const auto& r : rows) {
      const auto snr = number(r, "snr_db");
      const auto score = number(r, "model_score");
      if (snr && score && *snr <= 0.0) noisy.push_back(*score);
    }
    json dist = json::object();
    auto describe = [](const std::vector<double>& v) {
      return json{{"n", v.size()},
                  {"median", v.empty() ? json(nullptr) : json(median(v))},
                  {"q25", v.empty() ? json(nullptr) : json(quantile(v, 0.25))},
                  {"q75", v.empty() ? json(nullptr) : json(quantile(v, 0.75))}};
    };
    dist["clean_segments"] = describe(clean);
    dist["noisy_pairs_snr_le_0db"] = describe(noisy);
    if (!clean.empty()) summary.clean_median = median(clean);
    if (!noisy.empty()) summary.noisy_median = median(noisy);
    std::ofstream(reports / "score_distribution.json") << dist.dump(2) << '\n';
  }

  // (b) correlation matrix over the metric panel.
  {
    const auto transcripts = load_transcripts(config.transcripts);
    std::vector<MetricColumn> cols;
    auto add_col = [&](const std::string& name, bool ref, bool ingested) {
      cols.push_back({name, std::vector<double>(rows.size(), std::nan("")), ref, ingested});
      return cols.size() - 1;
    };
    const std::size_t c_index = add_col("degradation_index", false, false);
    const std::size_t c_score = add_col("model_score", false, false);
    const std::size_t c_sisdr = add_col("si_sdr", true, false);
    const std::size_t c_wer = add_col("wer", true, false);
    const std::size_t c_cer = add_col("cer", true, false);
    std::map<std::string, std::size_t> ext_cols;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (auto v = number(r, "degradation_index")) cols[c_index].values[i] = *v;
      if (auto v = number(r, "model_score")) cols[c_score].values[i] = *v;
      if (auto v = number(r, "si_sdr")) cols[c_sisdr].values[i] = *v;
      const auto ref = transcripts.find(r.value("clean_segment_id", std::string()));
      const auto hyp = transcripts.find(r.value("pair_id", std::string()));
      if (ref != transcripts.end() && hyp != transcripts.end() && !ref->second.empty()) {
        cols[c_wer].values[i] = word_error_rate(ref->second, hyp->second);
        cols[c_cer].values[i] = char_error_rate(ref->second, hyp->second);
      }
      if (r.contains("external") && r.at("external").is_object()) {
        for (const auto& [name, value] : r.at("external").items()) {
          if (!value.is_number()) continue;
          auto [it, inserted] = ext_cols.emplace(name, 0);
          if (inserted) it->second = add_col(name, name == "pesq" || name == "stoi", true);
          cols[it->second].values[i] = value.get<double>();
        }
      }
    }
    std::erase_if(cols, [](const MetricColumn& c) {
      return std::count_if(c.values.begin(), c.values.end(), [](double v) { return !std::isnan(v); }) == 0;
    });
    const CorrelationReport report = correlation_matrix(cols);
    std::ofstream(reports / "correlation.csv") << report.render_table(',');
    std::ofstream(reports / "correlation.jsonl") << report.render_records();
  }

  // (c) embedding distance by manipulation.
  {
    struct Row {
      double distance;
      std::vector<DegradationStep> steps;
    };
    std::vector<Row> data;
    for (const auto& r : rows) {
      const auto d = number(r, "embedding_distance");
      if (!d || !r.contains("recipe")) continue;
      data.push_back({*d, parse_steps(r.at("recipe"))});
    }
    auto has_kind = [](const Row& row, const std::string& kind) {
      return std::any_of(row.steps.begin(), row.steps.end(), [&](const DegradationStep& s) {
        switch (s.slot) {
          case StepSlot::kFilter1:
          case StepSlot::kFilter2: return kind == "filter";
          case StepSlot::kRir1:
          case StepSlot::kRir2: return kind == "rir";
          case StepSlot::kNoise: return kind == "noise";
          case StepSlot::kCodec: return kind == "codec";
        }
        return false;
      });
    };
    const std::vector<std::string> kinds{"filter", "rir", "noise", "codec"};
    json analysis = json::object();
    std::vector<std::string> tested;
    std::vector<double> raw_p;
    for (const auto& kind : kinds) {
      std::vector<double> with, without;
      for (const auto& row : data) (has_kind(row, kind) ? with : without).push_back(row.distance);
      if (with.empty() || without.empty()) continue;
      TestResult t = wilcoxon_rank_sum(with, without);
      json j = test_json(t);
      j["n_present"] = with.size();
      j["median_present"] = median(with);
      j["median_absent"] = median(without);
      analysis["presence"][kind] = j;
      summary.presence_tests[kind] = t;
      tested.push_back(kind);
      raw_p.push_back(t.p_value);
    }
    const auto corrected = bonferroni(raw_p, raw_p.size());
    for (std::size_t k = 0; k < tested.size(); ++k) {
      summary.presence_tests[tested[k]].corrected_p = corrected[k];
      analysis["presence"][tested[k]]["corrected_p"] = corrected[k];
    }

    std::map<std::string, std::vector<double>> single;
    for (const auto& row : data) {
      std::vector<std::string> present;
      for (const auto& kind : kinds) {
        if (has_kind(row, kind)) present.push_back(kind);
      }
      if (present.size() <= 1) single[present.empty() ? "none" : present.front()].push_back(row.distance);
    }
    std::vector<std::vector<double>> groups;
    for (const auto& [name, g] : single) {
      analysis["single_manipulation_medians"][name] = median(g);
      groups.push_back(g);
    }
    if (groups.size() >= 2) {
      summary.manipulation_groups = kruskal_wallis(groups);
      analysis["kruskal_wallis"] = test_json(*summary.manipulation_groups);
    }

    std::vector<double> snr, snr_d, lp, lp_d, hp, hp_d;
    for (const auto& row : data) {
      for (const auto& s : row.steps) {
        if (s.slot == StepSlot::kNoise) {
          snr.push_back(std::get<NoiseSpec>(s.params).snr_db);
          snr_d.push_back(row.distance);
        }
      }
      if (row.steps.size() == 1 && std::holds_alternative<FilterSpec>(row.steps[0].params)) {
        const auto& f = std::get<FilterSpec>(row.steps[0].params);
        auto& xs = f.kind == FilterKind::kLowPass ? lp : hp;
        auto& ds = f.kind == FilterKind::kLowPass ? lp_d : hp_d;
        xs.push_back(f.cutoff_hz);
        ds.push_back(row.distance);
      }
    }
    if (snr.size() >= 3) {
      summary.distance_vs_snr = spearman(snr, snr_d);
      analysis["distance_vs_snr"] = test_json(*summary.distance_vs_snr);
    }
    if (lp.size() >= 3) {
      summary.distance_vs_lowpass_cutoff = spearman(lp, lp_d);
      analysis["distance_vs_lowpass_cutoff"] = test_json(*summary.distance_vs_lowpass_cutoff);
    }
    if (hp.size() >= 3) {
      summary.distance_vs_highpass_cutoff = spearman(hp, hp_d);
      analysis["distance_vs_highpass_cutoff"] = test_json(*summary.distance_vs_highpass_cutoff);
    }
    std::ofstream(reports / "analysis.json") << analysis.dump(2) << '\n';
  }
  spdlog::info("evaluate: reports written to {}", reports.string());
  return summary;
}

// ---------------------------------------------------------------------------

IngestSummary cmd_ingest(const RunConfig& config, const CommandOptions& options) {
  if (options.manifest.empty()) throw InvalidInput("ingest: --manifest <pairs.jsonl> is required");
  const RunLayout layout(config.output_dir);
  write_snapshot(layout, "ingest", config);
  const fs::path base = fs::absolute(options.manifest).parent_path();
  auto input = read_jsonl(options.manifest);

  std::optional<double> scale;
  if (fs::exists(layout.checkpoint())) scale = nn::load_checkpoint(layout.checkpoint()).scale;

  std::optional<StoreSet> stores;
  if (config.embedding.provider == "store") stores = load_stores(config.embedding.stores);
  const BuiltinEmbedderConfig builtin;
  const std::string provider_id = stores ? stores->provider_id : builtin.provider_id();
  check_provider_override(options, provider_id);

  std::vector<Record> out(input.size());
  std::vector<std::string> errors(input.size());
  parallel_for(input.size(), config.workers, [&](std::size_t i) {
    const Record& in = input[i];
    try {
      const std::string pair_id = in.at("pair_id");
      auto resolve = [&](const std::string& key) {
        fs::path p = in.at(key).get<std::string>();
        return p.is_absolute() ? p : (base / p).lexically_normal();
      };
      const fs::path clean_path = resolve("clean_path"), degraded_path = resolve("degraded_path");
      AudioClip clean = load_asset(clean_path);
      AudioClip degraded = load_asset(degraded_path);

      Record r{{"pair_id", pair_id},
               {"clean_segment_id", pair_id + "/clean"},
               {"source_id", in.value("source_id", pair_id)},
               {"partition", in.value("partition", std::string("test"))},
               {"degraded_path", fs::absolute(degraded_path).lexically_normal().generic_string()},
               {"clean_path", fs::absolute(clean_path).lexically_normal().generic_string()},
               {"provider_id", provider_id}};
      json ext = json::object(), labels = json::object();
      for (const auto& [key, value] : in.items()) {
        if (r.contains(key) || key == "clean_path" || key == "degraded_path") continue;
        if (value.is_number()) {
          ext[key] = value;
        } else {
          labels[key] = value;
        }
      }
      if (!ext.empty()) r["external"] = ext;
      if (!labels.empty()) r["labels"] = labels;
      if (clean.size() == degraded.size()) {
        try {
          r["si_sdr"] = si_sdr(degraded.samples, clean.samples);
        } catch (const InvalidInput&) {
        }
      }
      std::optional<Embedding> ec, ed;
      if (stores) {
        ec = stores->get(pair_id + "/clean");
        ed = stores->get(pair_id);
      } else {
        ec = builtin_embed(clean, builtin);
        ed = builtin_embed(degraded, builtin);
      }
      if (ec && ed) {
        const double d = cosine_distance(*ec, *ed);
        r["embedding_distance"] = d;
        if (scale) {
          r["index_scale"] = *scale;
          r["degradation_index"] = d / *scale;
        }
      } else {
        r["index_error"] = "missing embedding";
      }
      out[i] = std::move(r);
    } catch (const json::exception& e) {
      errors[i] = std::string("malformed pair record: ") + e.what();
    } catch (const InvalidInput& e) {
      errors[i] = e.what();
    }
  });

  IngestSummary summary;
  std::vector<Record> records;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (errors[i].empty()) {
      records.push_back(std::move(out[i]));
    } else {
      spdlog::warn("ingest: record {} skipped: {}", i + 1, errors[i]);
      ++summary.failed;
    }
  }
  sort_by_id(records, "pair_id");
  write_jsonl(layout.external(), records);
  summary.pairs = records.size();
  spdlog::info("ingest: {} pairs written to {}", summary.pairs, layout.external().string());
  return summary;
}

}  // namespace dsq::pipeline
