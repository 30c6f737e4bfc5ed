#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsq/audio.hpp"
#include "dsq/nn/checkpoint.hpp"
#include "dsq/nn/model.hpp"

namespace dsq::nn {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 128;
  double lr_start = 1e-5;
  double lr_peak = 5e-4;
  double lr_end = 5e-9;
  double warmup_epochs = 15.0;
  double decay_epochs = 25.0;
  double truncate_min_s = 1.0;
  double truncate_max_s = 4.0;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Linear warmup from lr_start to lr_peak, then geometric decay to lr_end.
double lr_at(double epoch, const TrainConfig& tc);

/// Crops every clip to one shared duration drawn uniformly in [truncate_min_s, truncate_max_s];
/// each crop starts at its own uniformly drawn offset.
std::vector<AudioClip> random_truncate(const std::vector<AudioClip>& batch, std::mt19937_64& rng,
                                       const TrainConfig& tc);

struct TrainExample {
  std::string id;
  AudioClip clip;
  float target = 0.0F;
  std::string provider_id;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam optimizer plus a batched MSE step over a Model.
class Trainer {
 public:
  Trainer(Model& model, int threads, std::uint64_t seed);

  /// One Adam update on (clips, targets). Returns the batch MSE before the update.
  double step(const std::vector<AudioClip>& clips, const std::vector<float>& targets, double lr,
              bool use_layerdrop = true);
  /// Evaluation-mode MSE.
  double evaluate(const std::vector<AudioClip>& clips, const std::vector<float>& targets) const;

  std::uint64_t steps_taken() const { return t_; }

  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

 private:
  Model& model_;
  int threads_;
  std::mt19937_64 rng_;
  Gradients m_, v_;
  std::uint64_t t_ = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run. Returns the checkpoint of the epoch with the lowest validation loss.
Checkpoint train(const std::vector<TrainExample>& train_set, const std::vector<TrainExample>& val_set,
                 const ModelConfig& mc, const TrainConfig& tc, double scale, const EpochCallback& on_epoch = {});

}  // namespace dsq::nn
