#include "dsq/nn/model.hpp"

#include <cmath>
#include <sstream>

#include "dsq/error.hpp"

namespace dsq::nn {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidInput("model config: " + m); };
  if (conv_strides.size() != 7 || conv_kernels.size() != 7) fail("expected 7 conv strides and 7 conv kernels");
  for (std::size_t i = 0; i < conv_strides.size(); ++i) {
    if (conv_strides[i] <= 0 || conv_kernels[i] <= 0) fail("conv strides and kernels must be positive");
  }
  if (conv_channels <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_dim <= 0 || head_dim <= 0 ||
      sample_rate <= 0 || max_positions <= 0) {
    fail("all dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (!(layerdrop >= 0.0 && layerdrop < 1.0)) fail("layerdrop must be in [0, 1)");
  if (!(min_duration_s > 0.0 && min_duration_s <= max_duration_s)) fail("invalid duration range");
  const auto max_samples = static_cast<Eigen::Index>(std::llround(max_duration_s * sample_rate));
  if (max_samples >= receptive_field(*this) && frame_count(*this, max_samples) > max_positions) {
    fail("max_positions smaller than the longest frame sequence");
  }
  if (static_cast<Eigen::Index>(std::llround(min_duration_s * sample_rate)) < receptive_field(*this)) {
    fail("minimum duration shorter than the receptive field");
  }
}

ModelConfig ModelConfig::ablation() {
  ModelConfig c;
  c.conv_channels = 256;
  c.d_model = 480;
  c.n_heads = 10;
  c.n_layers = 8;
  c.ffn_dim = 1920;
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"conv_channels", c.conv_channels}, {"conv_strides", c.conv_strides},
                     {"conv_kernels", c.conv_kernels},   {"d_model", c.d_model},
                     {"n_layers", c.n_layers},           {"n_heads", c.n_heads},
                     {"ffn_dim", c.ffn_dim},             {"layerdrop", c.layerdrop},
                     {"head_dim", c.head_dim},           {"sample_rate", c.sample_rate},
                     {"max_positions", c.max_positions}, {"min_duration_s", c.min_duration_s},
                     {"max_duration_s", c.max_duration_s}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.conv_channels = j.value("conv_channels", d.conv_channels);
  c.conv_strides = j.value("conv_strides", d.conv_strides);
  c.conv_kernels = j.value("conv_kernels", d.conv_kernels);
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.layerdrop = j.value("layerdrop", d.layerdrop);
  c.head_dim = j.value("head_dim", d.head_dim);
  c.sample_rate = j.value("sample_rate", d.sample_rate);
  c.max_positions = j.value("max_positions", d.max_positions);
  c.min_duration_s = j.value("min_duration_s", d.min_duration_s);
  c.max_duration_s = j.value("max_duration_s", d.max_duration_s);
}

Eigen::Index receptive_field(const ModelConfig& c) {
  Eigen::Index field = 1, jump = 1;
  for (std::size_t i = 0; i < c.conv_kernels.size(); ++i) {
    field += (c.conv_kernels[i] - 1) * jump;
    jump *= c.conv_strides[i];
  }
  return field;
}

Eigen::Index total_stride(const ModelConfig& c) {
  Eigen::Index s = 1;
  for (int v : c.conv_strides) s *= v;
  return s;
}

Eigen::Index frame_count(const ModelConfig& c, Eigen::Index n_samples) {
  if (n_samples < receptive_field(c)) {
    std::ostringstream os;
    os << "input of " << n_samples << " samples is shorter than the receptive field (" << receptive_field(c) << ")";
    throw InvalidInput(os.str());
  }
  Eigen::Index len = n_samples;
  for (std::size_t i = 0; i < c.conv_kernels.size(); ++i) len = (len - c.conv_kernels[i]) / c.conv_strides[i] + 1;
  return len;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  int in = 1;
  for (std::size_t i = 0; i < c.conv_kernels.size(); ++i) {
    const std::string name = "conv." + std::to_string(i);
    convs_.emplace_back(params_, name, in, c.conv_channels, c.conv_kernels[i], c.conv_strides[i]);
    conv_norms_.emplace_back(params_, name + ".norm", c.conv_channels);
    in = c.conv_channels;
  }
  proj_ = Linear(params_, "proj", c.conv_channels, c.d_model);
  positions_ = params_.add("positions", c.max_positions, c.d_model);
  for (int l = 0; l < c.n_layers; ++l) {
    layers_.emplace_back(params_, "encoder." + std::to_string(l), c.d_model, c.n_heads, c.ffn_dim);
  }
  head1_ = Linear(params_, "head.0", c.d_model, c.head_dim);
  head2_ = Linear(params_, "head.1", c.head_dim, 1);
}

void Model::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].init_default(params_, rng);
    conv_norms_[i].init_default(params_);
  }
  proj_.init_default(params_, rng);
  params_[positions_].value = sinusoidal_table(config_.max_positions, config_.d_model);
  for (const auto& layer : layers_) layer.init_default(params_, rng);
  head1_.init_default(params_, rng);
  head2_.init_default(params_, rng);
}

void Model::check_duration(const AudioClip& clip) const {
  if (clip.sample_rate != config_.sample_rate) {
    throw InvalidInput("model expects " + std::to_string(config_.sample_rate) + " Hz input, got " +
                       std::to_string(clip.sample_rate));
  }
  const auto lo = static_cast<std::size_t>(std::llround(config_.min_duration_s * config_.sample_rate));
  const auto hi = static_cast<std::size_t>(std::llround(config_.max_duration_s * config_.sample_rate));
  if (clip.size() < lo || clip.size() > hi) {
    std::ostringstream os;
    os << "clip duration " << clip.duration_s() << " s outside [" << config_.min_duration_s << ", "
       << config_.max_duration_s << "] s";
    throw InvalidInput(os.str());
  }
}

float Model::score(const AudioClip& clip) const {
  check_duration(clip);
  return forward(clip.samples, nullptr, nullptr);
}

Matrix Model::front_end(std::span<const float> samples, ForwardCache* cache) const {
  const auto n = static_cast<Eigen::Index>(samples.size());
  frame_count(config_, n);  // throws when too short
  Matrix x = Eigen::Map<const Matrix>(samples.data(), n, 1);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    Matrix pre = convs_[i].forward(params_, x);
    if (cache != nullptr) {
      cache->conv_in.push_back(std::move(x));
      cache->conv_norm.emplace_back();
    }
    Matrix normed = conv_norms_[i].forward(params_, pre, cache ? &cache->conv_norm.back() : nullptr);
    x = gelu(normed);
    if (cache != nullptr) cache->conv_normed.push_back(std::move(normed));
  }
  return x;
}

Eigen::Index Model::encoder_length(std::span<const float> samples) const {
  return front_end(samples, nullptr).rows();
}

float Model::forward(std::span<const float> samples, ForwardCache* cache, const std::vector<bool>* dropped) const {
  if (cache != nullptr) *cache = ForwardCache{};
  Matrix feats = front_end(samples, cache);
  const Eigen::Index t = feats.rows();
  if (t > config_.max_positions) throw InvalidInput("input longer than the positional table");

  Matrix pre = proj_.forward(params_, feats);
  Matrix x = gelu(pre);
  x += params_[positions_].value.topRows(t);
  if (cache != nullptr) {
    cache->proj_in = std::move(feats);
    cache->proj_pre = std::move(pre);
    cache->layers.resize(layers_.size());
    cache->dropped.assign(layers_.size(), false);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (dropped != nullptr && (*dropped)[l]) {
      if (cache != nullptr) cache->dropped[l] = true;
      continue;
    }
    x = layers_[l].forward(params_, x, cache ? &cache->layers[l] : nullptr);
  }
  Matrix pooled = x.colwise().mean();
  Matrix head_pre = head1_.forward(params_, pooled);
  Matrix head_act = gelu(head_pre);
  const float out = head2_.forward(params_, head_act)(0, 0);
  if (cache != nullptr) {
    cache->pooled = std::move(pooled);
    cache->head_pre = std::move(head_pre);
    cache->head_act = std::move(head_act);
  }
  return out;
}

void Model::backward(const ForwardCache& cache, float dscore, Gradients& g) const {
  Matrix dy(1, 1);
  dy(0, 0) = dscore;
  Matrix d = head2_.backward(params_, cache.head_act, dy, g);
  d = head1_.backward(params_, cache.pooled, gelu_backward(cache.head_pre, d), g);

  const Eigen::Index t = cache.proj_in.rows();
  Matrix dx = d.replicate(t, 1) / static_cast<float>(t);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (cache.dropped[l]) continue;
    dx = layers_[l].backward(params_, dx, cache.layers[l], g);
  }
  g[positions_].topRows(t) += dx;
  dx = proj_.backward(params_, cache.proj_in, gelu_backward(cache.proj_pre, dx), g);
  for (std::size_t i = convs_.size(); i-- > 0;) {
    const Matrix dnorm = gelu_backward(cache.conv_normed[i], dx);
    const Matrix dpre = conv_norms_[i].backward(params_, dnorm, cache.conv_norm[i], g);
    if (i == 0) {
      // The waveform needs no gradient; only accumulate the first conv's weights.
      const Eigen::Index t0 = dpre.rows();
      const Eigen::Index width = convs_[0].kernel;
      const Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> patches(cache.conv_in[0].data(), t0, width,
                                                                      Eigen::OuterStride<>(convs_[0].stride));
      g[convs_[0].weight].noalias() += dpre.transpose() * patches;
      g[convs_[0].bias].row(0) += dpre.colwise().sum();
    } else {
      dx = convs_[i].backward(params_, cache.conv_in[i], dpre, g);
    }
  }
}

std::size_t parameter_count(const ModelConfig& c) { return Model(c).parameter_count(); }

}  // namespace dsq::nn
