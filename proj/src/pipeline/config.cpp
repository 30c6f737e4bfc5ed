#include "dsq/pipeline/config.hpp"

#include <fstream>

#include "dsq/error.hpp"

namespace dsq::pipeline {
namespace {

using nlohmann::json;

ExternalCodecConfig default_external() {
  ExternalCodecConfig c;
  c.encode["mp3"] = "lame --quiet -b {q} {in} {out}";
  c.decode["mp3"] = "lame --quiet --decode {in} {out}";
  c.encode["ogg-vorbis"] = "oggenc --quiet -q {q} -o {out} {in}";
  c.decode["ogg-vorbis"] = "oggdec --quiet -o {out} {in}";
  c.encode["gsm"] = "sox {in} {out}";
  c.decode["gsm"] = "sox {in} {out}";
  return c;
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty()) return {};
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

void check(bool ok, const std::string& message) {
  if (!ok) throw InvalidInput("config: " + message);
}

}  // namespace

void RunConfig::validate() const {
  check(version == 1, "unsupported config version " + std::to_string(version));
  check(workers >= 1, "workers must be >= 1");
  check(variants >= 0, "variants must be >= 0");
  check(segment.window_s > 0 && segment.hop_s > 0, "segment window and hop must be positive");
  check(segment.sample_rate == 16000, "pipeline sample rate must be 16000");
  for (double p : {probabilities.filter1, probabilities.rir1, probabilities.noise, probabilities.filter2,
                   probabilities.rir2, probabilities.codec}) {
    check(p >= 0.0 && p <= 1.0, "probabilities must lie in [0, 1]");
  }
  check(ranges.cutoff_min_hz > 0 && ranges.cutoff_min_hz <= ranges.cutoff_max_hz &&
            ranges.cutoff_max_hz < segment.sample_rate / 2.0,
        "invalid cutoff range");
  check(ranges.snr_min_db <= ranges.snr_max_db, "invalid snr range");
  check(!ranges.codecs.empty() || probabilities.codec == 0.0, "codec list empty but codec probability nonzero");
  check(partitions.validation >= 0 && partitions.test >= 0 && partitions.validation + partitions.test < 1.0,
        "partition fractions must be nonnegative and sum below 1");
  check(embedding.provider == "builtin" || embedding.provider == "store",
        "embedding.provider must be 'builtin' or 'store'");
  check(embedding.provider != "store" || !embedding.stores.empty(), "embedding.stores required for provider 'store'");
  model.validate();
  train.validate();
}

RunConfig parse_config(const json& j, const fs::path& base) {
  check(j.is_object(), "top level must be an object");
  RunConfig c;
  try {
    c.version = j.value("version", 1);
    c.master_seed = j.value("master_seed", std::uint64_t{0});
    c.workers = j.value("workers", 1);
    c.corpus_dir = resolve(j, "corpus_dir", base);
    c.rir_dir = resolve(j, "rir_dir", base);
    c.noise_dir = resolve(j, "noise_dir", base);
    c.output_dir = resolve(j, "output_dir", base);
    if (c.output_dir.empty()) c.output_dir = base / "run";
    c.transcripts = resolve(j, "transcripts", base);

    if (j.contains("segment")) {
      const auto& s = j.at("segment");
      c.segment.window_s = s.value("window_s", c.segment.window_s);
      c.segment.hop_s = s.value("hop_s", c.segment.hop_s);
      c.segment.trim_threshold_db = s.value("trim_threshold_db", c.segment.trim_threshold_db);
      c.segment.target_lufs = s.value("target_lufs", c.segment.target_lufs);
      c.segment.sample_rate = s.value("sample_rate", c.segment.sample_rate);
    }

    c.codec.external = default_external();
    if (j.contains("degrade")) {
      const auto& d = j.at("degrade");
      c.variants = d.value("variants", c.variants);
      if (d.contains("probabilities")) {
        const auto& p = d.at("probabilities");
        auto& q = c.probabilities;
        q.filter1 = p.value("filter1", q.filter1);
        q.rir1 = p.value("rir1", q.rir1);
        q.noise = p.value("noise", q.noise);
        q.filter2 = p.value("filter2", q.filter2);
        q.rir2 = p.value("rir2", q.rir2);
        q.codec = p.value("codec", q.codec);
      }
      if (d.contains("ranges")) {
        const auto& r = d.at("ranges");
        auto& q = c.ranges;
        q.cutoff_min_hz = r.value("cutoff_min_hz", q.cutoff_min_hz);
        q.cutoff_max_hz = r.value("cutoff_max_hz", q.cutoff_max_hz);
        q.snr_min_db = r.value("snr_min_db", q.snr_min_db);
        q.snr_max_db = r.value("snr_max_db", q.snr_max_db);
        if (r.contains("codecs")) {
          q.codecs.clear();
          for (const auto& name : r.at("codecs")) q.codecs.push_back(codec_from_string(name.get<std::string>()));
        }
      }
      if (d.contains("codec")) {
        const auto& k = d.at("codec");
        c.codec.prefer_external = k.value("prefer_external", c.codec.prefer_external);
        c.codec.allow_fallback = k.value("allow_fallback", c.codec.allow_fallback);
        if (k.contains("encode")) {
          for (const auto& [name, cmd] : k.at("encode").items()) {
            c.codec.external.encode[to_string(codec_from_string(name))] = cmd.get<std::string>();
          }
        }
        if (k.contains("decode")) {
          for (const auto& [name, cmd] : k.at("decode").items()) {
            c.codec.external.decode[to_string(codec_from_string(name))] = cmd.get<std::string>();
          }
        }
      }
    }

    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      c.embedding.provider = e.value("provider", c.embedding.provider);
      if (e.contains("stores")) {
        for (const auto& s : e.at("stores")) {
          fs::path p = s.get<std::string>();
          c.embedding.stores.push_back(p.is_absolute() ? p : (base / p).lexically_normal());
        }
      }
    }
    if (j.contains("partitions")) {
      const auto& p = j.at("partitions");
      c.partitions.validation = p.value("validation", c.partitions.validation);
      c.partitions.test = p.value("test", c.partitions.test);
    }
    if (j.contains("model")) c.model = j.at("model").get<nn::ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<nn::TrainConfig>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json codecs = json::array();
  for (auto k : c.ranges.codecs) codecs.push_back(to_string(k));
  json stores = json::array();
  for (const auto& s : c.embedding.stores) stores.push_back(s.string());
  return json{
      {"version", c.version},
      {"master_seed", c.master_seed},
      {"workers", c.workers},
      {"corpus_dir", c.corpus_dir.string()},
      {"rir_dir", c.rir_dir.string()},
      {"noise_dir", c.noise_dir.string()},
      {"output_dir", c.output_dir.string()},
      {"transcripts", c.transcripts.string()},
      {"segment",
       {{"window_s", c.segment.window_s},
        {"hop_s", c.segment.hop_s},
        {"trim_threshold_db", c.segment.trim_threshold_db},
        {"target_lufs", c.segment.target_lufs},
        {"sample_rate", c.segment.sample_rate}}},
      {"degrade",
       {{"variants", c.variants},
        {"probabilities",
         {{"filter1", c.probabilities.filter1},
          {"rir1", c.probabilities.rir1},
          {"noise", c.probabilities.noise},
          {"filter2", c.probabilities.filter2},
          {"rir2", c.probabilities.rir2},
          {"codec", c.probabilities.codec}}},
        {"ranges",
         {{"cutoff_min_hz", c.ranges.cutoff_min_hz},
          {"cutoff_max_hz", c.ranges.cutoff_max_hz},
          {"snr_min_db", c.ranges.snr_min_db},
          {"snr_max_db", c.ranges.snr_max_db},
          {"codecs", codecs}}},
        {"codec",
         {{"prefer_external", c.codec.prefer_external},
          {"allow_fallback", c.codec.allow_fallback},
          {"encode", c.codec.external.encode},
          {"decode", c.codec.external.decode}}}}},
      {"embedding", {{"provider", c.embedding.provider}, {"stores", stores}}},
      {"partitions", {{"validation", c.partitions.validation}, {"test", c.partitions.test}}},
      {"model", c.model},
      {"train", c.train},
  };
}

}  // namespace dsq::pipeline
