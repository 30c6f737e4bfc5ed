#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dsq/codec.hpp"
#include "dsq/nn/model.hpp"
#include "dsq/nn/train.hpp"
#include "dsq/recipe.hpp"

namespace dsq::pipeline {

namespace fs = std::filesystem;

struct SegmentConfig {
  double window_s = 4.0;
  double hop_s = 1.0;
  double trim_threshold_db = 30.0;
  double target_lufs = -35.0;
  int sample_rate = 16000;
};

/// Fractions of clean sources assigned to each held-out partition by hash bucket.
struct PartitionConfig {
  double validation = 0.1;
  double test = 0.1;
};

struct EmbeddingConfig {
  std::string provider = "builtin";  ///< "builtin" or "store"
  std::vector<fs::path> stores;      ///< embedding store files when provider == "store"
};

struct RunConfig {
  int version = 1;
  std::uint64_t master_seed = 0;
  int workers = 1;
  fs::path corpus_dir;
  fs::path rir_dir;
  fs::path noise_dir;
  fs::path output_dir;
  fs::path transcripts;  ///< optional JSONL {id, text} for segment and pair ids
  SegmentConfig segment;
  int variants = 4;
  DegradationProbabilities probabilities;
  DegradationRanges ranges;
  CodecOptions codec;
  EmbeddingConfig embedding;
  PartitionConfig partitions;
  nn::ModelConfig model;
  nn::TrainConfig train;

  void validate() const;
};

/// Parses a JSON config; relative paths resolve against `base_dir`. Throws InvalidInput.
RunConfig parse_config(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_config(const fs::path& path);
nlohmann::json to_json(const RunConfig& config);

}  // namespace dsq::pipeline
