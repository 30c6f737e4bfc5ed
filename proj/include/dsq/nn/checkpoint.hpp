#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsq/audio.hpp"
#include "dsq/nn/model.hpp"

namespace dsq::nn {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  ///< learning rate at the end of the epoch
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);

struct Checkpoint {
  std::shared_ptr<Model> model;
  double best_val_loss = 0.0;
  int epoch_of_best = -1;
  std::string provider_id;  ///< embedding provider the targets came from
  double scale = 0.0;       ///< index scale the targets were divided by
  std::vector<EpochRecord> log;
  nlohmann::json train_config;  ///< informational snapshot
};

/// Binary container: "DSQCKPT1", u64 header size, JSON header, raw little-endian float32 tensors.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct ScoreOutcome {
  std::optional<float> score;
  std::string error;  ///< set when the clip could not be scored
};

/// Evaluation-mode scores in input order; per-item validation failures do not stop the batch.
std::vector<ScoreOutcome> score_batch(const Checkpoint& ckpt, const std::vector<AudioClip>& clips);

}  // namespace dsq::nn
