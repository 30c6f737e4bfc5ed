#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsq/pipeline/config.hpp"
#include "dsq/pipeline/manifest.hpp"
#include "dsq/stats.hpp"

namespace dsq::pipeline {

/// Command-line overrides shared by all subcommands.
struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> partition;
  std::optional<std::string> provider;
  bool resume = false;
  fs::path manifest;  ///< input manifest override (score, evaluate) or external pair list (ingest)
};

/// Locations of every artifact under the run's output directory.
struct RunLayout {
  explicit RunLayout(fs::path root_dir);
  fs::path root;
  fs::path segments_dir() const { return root / "segments"; }
  fs::path degraded_dir() const { return root / "degraded"; }
  fs::path segments() const { return root / "manifests" / "segments.jsonl"; }
  fs::path exclusions() const { return root / "manifests" / "exclusions.jsonl"; }
  fs::path pairs() const { return root / "manifests" / "pairs.jsonl"; }
  fs::path pairs_journal() const { return root / "manifests" / "pairs.partial.jsonl"; }
  fs::path degrade_failures() const { return root / "manifests" / "degrade_failures.jsonl"; }
  fs::path indexed() const { return root / "manifests" / "indexed.jsonl"; }
  fs::path scored() const { return root / "manifests" / "scored.jsonl"; }
  fs::path segment_scores() const { return root / "manifests" / "segment_scores.jsonl"; }
  fs::path external() const { return root / "manifests" / "external.jsonl"; }
  fs::path builtin_store() const { return root / "embeddings" / "builtin.dsqemb"; }
  fs::path checkpoint() const { return root / "model" / "checkpoint.dsqckpt"; }
  fs::path train_log() const { return root / "model" / "train_log.jsonl"; }
  fs::path reports_dir() const { return root / "reports"; }
  fs::path snapshot(const std::string& stage) const { return root / "config" / (stage + ".resolved.json"); }
};

/// Config with command-line overrides applied.
RunConfig apply_overrides(RunConfig config, const CommandOptions& options);

/// Partition for a clean source, from a hash bucket of its id.
std::string partition_for(const std::string& source_id, const PartitionConfig& partitions);

struct PrepareSummary {
  std::size_t sources = 0;
  std::size_t segments = 0;
  std::size_t excluded = 0;
};
PrepareSummary cmd_prepare(const RunConfig& config, const CommandOptions& options = {});

struct DegradeSummary {
  std::size_t pairs = 0;
  std::size_t reused = 0;
  std::size_t failed = 0;
};
DegradeSummary cmd_degrade(const RunConfig& config, const CommandOptions& options = {});

struct IndexSummary {
  std::size_t indexed = 0;
  std::size_t missing = 0;
  double scale = 0.0;
  std::string provider_id;
};
IndexSummary cmd_index(const RunConfig& config, const CommandOptions& options = {});

struct TrainSummary {
  std::size_t train_pairs = 0;
  std::size_t validation_pairs = 0;
  int epoch_of_best = -1;
  double best_val_loss = 0.0;
};
TrainSummary cmd_train(const RunConfig& config, const CommandOptions& options = {});

struct ScoreSummary {
  std::size_t scored = 0;
  std::size_t failed = 0;
  std::size_t clean_scored = 0;
};
ScoreSummary cmd_score(const RunConfig& config, const CommandOptions& options = {});

struct PartitionAgreement {
  std::string partition;
  std::size_t n = 0;
  double mae = 0.0;
  TestResult spearman;
};

struct EvaluateSummary {
  std::vector<PartitionAgreement> agreement;  ///< model score vs degradation index
  std::optional<double> clean_median;         ///< median model score on clean segments
  std::optional<double> noisy_median;         ///< median model score on pairs with SNR <= 0 dB
  std::map<std::string, TestResult> presence_tests;  ///< distance, step present vs absent
  std::optional<TestResult> manipulation_groups;     ///< Kruskal-Wallis over single-step groups
  std::optional<TestResult> distance_vs_snr;
  std::optional<TestResult> distance_vs_lowpass_cutoff;
  std::optional<TestResult> distance_vs_highpass_cutoff;
};
EvaluateSummary cmd_evaluate(const RunConfig& config, const CommandOptions& options = {});

struct IngestSummary {
  std::size_t pairs = 0;
  std::size_t failed = 0;
};
/// Ingests pre-paired clean/degraded files listed in `options.manifest` (JSONL with
/// pair_id, clean_path, degraded_path and optional extra columns).
IngestSummary cmd_ingest(const RunConfig& config, const CommandOptions& options);

}  // namespace dsq::pipeline
