#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "dsq/audio.hpp"
#include "dsq/nn/layers.hpp"

namespace dsq::nn {

struct ModelConfig {
  int conv_channels = 128;
  std::vector<int> conv_strides{5, 2, 2, 2, 2, 2, 2};
  std::vector<int> conv_kernels{10, 3, 3, 3, 3, 2, 2};
  int d_model = 384;
  int n_layers = 6;
  int n_heads = 8;
  int ffn_dim = 1536;
  double layerdrop = 0.05;
  int head_dim = 128;
  int sample_rate = 16000;
  int max_positions = 10000;  ///< rows of the learnable positional table
  double min_duration_s = 1.0;
  double max_duration_s = 4.0;

  /// Throws InvalidInput on any violated invariant.
  void validate() const;

  /// Wider variant: 256 channels, width 480, 10 heads, 8 layers, ffn 1920.
  static ModelConfig ablation();
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Samples covered by one output frame.
Eigen::Index receptive_field(const ModelConfig& c);
/// Product of conv strides.
Eigen::Index total_stride(const ModelConfig& c);
/// Frames after the conv stack; throws if n_samples < receptive_field.
Eigen::Index frame_count(const ModelConfig& c, Eigen::Index n_samples);

/// Activations kept for backpropagation through a single clip.
struct ForwardCache {
  std::vector<Matrix> conv_in;
  std::vector<LayerNorm::Cache> conv_norm;
  std::vector<Matrix> conv_normed;  // LN output, pre-GELU
  Matrix proj_in;
  Matrix proj_pre;
  std::vector<EncoderLayer::Cache> layers;
  std::vector<bool> dropped;
  Matrix pooled;     // [1 x d_model]
  Matrix head_pre;   // [1 x head_dim]
  Matrix head_act;
};

class Model {
 public:
  explicit Model(ModelConfig config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void init(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  /// Evaluation-mode score; checks sample rate and duration.
  float score(const AudioClip& clip) const;

  /// Raw forward pass. `dropped` (one flag per encoder layer) skips layers; pass
  /// nullptr for evaluation mode. Fills `cache` when non-null.
  float forward(std::span<const float> samples, ForwardCache* cache,
                const std::vector<bool>* dropped = nullptr) const;
  /// Sequence length reaching the encoder for a given input (executes the conv stack).
  Eigen::Index encoder_length(std::span<const float> samples) const;

  /// Accumulates d(score)/d(params) scaled by `dscore` into `g`.
  void backward(const ForwardCache& cache, float dscore, Gradients& g) const;

  void check_duration(const AudioClip& clip) const;

 private:
  Matrix front_end(std::span<const float> samples, ForwardCache* cache) const;

  ModelConfig config_;
  ParameterSet params_;
  std::vector<Conv1d> convs_;
  std::vector<LayerNorm> conv_norms_;
  Linear proj_;
  std::size_t positions_ = 0;
  std::vector<EncoderLayer> layers_;
  Linear head1_, head2_;
};

/// Builds the model and counts its scalar parameters.
std::size_t parameter_count(const ModelConfig& c);

}  // namespace dsq::nn
