#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dsq/error.hpp"
#include "dsq/nn/checkpoint.hpp"
#include "dsq/nn/model.hpp"

namespace dsq::nn {
namespace {

// Conv output length by direct iteration over the stack.
Eigen::Index oracle_frames(const ModelConfig& c, Eigen::Index n) {
  for (std::size_t i = 0; i < c.conv_strides.size(); ++i) {
    if (n < c.conv_kernels[i]) return 0;
    n = (n - c.conv_kernels[i]) / c.conv_strides[i] + 1;
  }
  return n;
}

ModelConfig tiny() {
  ModelConfig c;
  c.conv_channels = 16;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.ffn_dim = 16;
  c.head_dim = 4;
  c.max_positions = 200;
  c.min_duration_s = 0.05;
  c.max_duration_s = 0.2;
  return c;
}

std::vector<float> noise(std::size_t n, std::uint64_t seed, float sd = 0.3F) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0F, sd);
  std::vector<float> x(n);
  for (float& v : x) v = g(rng);
  return x;
}

TEST(ModelShape, ParameterCountsNearTargets) {
  EXPECT_NEAR(static_cast<double>(parameter_count(ModelConfig{})), 14.7e6, 0.05 * 14.7e6);
  EXPECT_NEAR(static_cast<double>(parameter_count(ModelConfig::ablation())), 28.6e6, 0.05 * 28.6e6);
}

TEST(ModelShape, ConvGeometry) {
  const ModelConfig c;
  EXPECT_EQ(receptive_field(c), 400);
  EXPECT_EQ(total_stride(c), 320);
  EXPECT_EQ(frame_count(c, 64000), 199);
  EXPECT_EQ(frame_count(c, 400), 1);
  EXPECT_THROW(frame_count(c, 399), InvalidInput);
}

TEST(ModelShape, FrameCountMatchesOracle) {
  const ModelConfig c;
  for (Eigen::Index n = 400; n < 70000; n += 37) ASSERT_EQ(frame_count(c, n), oracle_frames(c, n)) << n;
}

TEST(ModelShape, FrameCountMatchesExecutedForward) {
  ModelConfig c = tiny();
  c.max_positions = 300;
  c.max_duration_s = 4.0;
  Model m(c);
  m.init(1);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<Eigen::Index> len(400, 64000);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Index n = len(rng);
    const auto x = noise(static_cast<std::size_t>(n), i);
    ASSERT_EQ(m.encoder_length(x), frame_count(c, n)) << n;
  }
}

TEST(ModelConfigTest, ValidationRejectsBadShapes) {
  ModelConfig c;
  c.d_model = 100;  // not divisible by 8 heads
  EXPECT_THROW(c.validate(), InvalidInput);
  c = ModelConfig{};
  c.conv_strides.pop_back();
  EXPECT_THROW(c.validate(), InvalidInput);
  c = ModelConfig{};
  c.layerdrop = 1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = ModelConfig{};
  c.max_positions = 100;
  EXPECT_THROW(c.validate(), InvalidInput);
  EXPECT_NO_THROW(ModelConfig{}.validate());
  EXPECT_NO_THROW(ModelConfig::ablation().validate());
}

TEST(ModelConfigTest, JsonRoundTrip) {
  const ModelConfig a = ModelConfig::ablation();
  const ModelConfig b = nlohmann::json(a).get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(a), nlohmann::json(b));
  EXPECT_EQ(b.d_model, 480);
}

TEST(Model, InitIsSeeded) {
  Model a(tiny()), b(tiny()), c(tiny());
  a.init(5);
  b.init(5);
  c.init(6);
  const auto x = noise(2000, 1);
  EXPECT_EQ(a.forward(x, nullptr), b.forward(x, nullptr));
  EXPECT_NE(a.forward(x, nullptr), c.forward(x, nullptr));
}

TEST(Model, ScoreChecksDurationAndRate) {
  Model m(ModelConfig{});
  m.init(1);
  AudioClip clip;
  clip.samples.assign(8000, 0.01F);  // 0.5 s
  EXPECT_THROW(m.score(clip), InvalidInput);
  clip.samples.assign(16000 * 5, 0.01F);
  EXPECT_THROW(m.score(clip), InvalidInput);
  clip.samples.assign(16000, 0.01F);
  clip.sample_rate = 8000;
  EXPECT_THROW(m.score(clip), InvalidInput);
}

TEST(Model, DroppedLayersChangeOutputOnlyWhenSet) {
  Model m(tiny());
  m.init(2);
  const auto x = noise(2000, 3);
  const std::vector<bool> none(2, false), all(2, true);
  EXPECT_EQ(m.forward(x, nullptr, &none), m.forward(x, nullptr));
  EXPECT_NE(m.forward(x, nullptr, &all), m.forward(x, nullptr));
}

TEST(Model, GradientsMatchFiniteDifferences) {
  Model m(tiny());
  m.init(3);
  const auto x = noise(2000, 1);
  ForwardCache cache;
  m.forward(x, &cache);
  auto g = m.params().zero_gradients();
  m.backward(cache, 1.0F, g);
  int checked = 0;
  for (std::size_t p = 0; p < m.params().size(); ++p) {
    auto& val = m.params()[p].value;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Index i = (k * 7919) % val.size();
      const float old = val.data()[i];
      const float h = 2e-3F;
      val.data()[i] = old + h;
      const double yp = m.forward(x, nullptr);
      val.data()[i] = old - h;
      const double ym = m.forward(x, nullptr);
      val.data()[i] = old;
      const double num = (yp - ym) / (2.0 * h);
      const double an = g[p].data()[i];
      EXPECT_LE(std::abs(num - an), 0.05 * std::max(1e-3, std::abs(num) + std::abs(an)))
          << m.params()[p].name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(Checkpoint, RoundTripPreservesScores) {
  Checkpoint ck;
  ck.model = std::make_shared<Model>(tiny());
  ck.model->init(4);
  ck.best_val_loss = 0.25;
  ck.epoch_of_best = 3;
  ck.provider_id = "prov";
  ck.scale = 1.18;
  ck.log = {{0, 0.5, 0.4, 1e-5}, {1, 0.3, 0.25, 2e-5}};
  const auto path = std::filesystem::temp_directory_path() / "dsq_test.dsqckpt";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.provider_id, "prov");
  EXPECT_DOUBLE_EQ(back.scale, 1.18);
  EXPECT_EQ(back.epoch_of_best, 3);
  ASSERT_EQ(back.log.size(), 2U);
  EXPECT_DOUBLE_EQ(back.log[1].val_loss, 0.25);
  const auto x = noise(2000, 9);
  EXPECT_EQ(back.model->forward(x, nullptr), ck.model->forward(x, nullptr));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFileRejected) {
  const auto path = std::filesystem::temp_directory_path() / "dsq_bad.dsqckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "DSQCKPT1garbage";
  }
  EXPECT_THROW(load_checkpoint(path), InvalidInput);
  std::filesystem::remove(path);
}

TEST(Checkpoint, ScoreBatchRecordsPerItemErrors) {
  Checkpoint ck;
  ck.model = std::make_shared<Model>(tiny());
  ck.model->init(4);
  AudioClip good, bad;
  good.samples = noise(2000, 1);
  bad.samples = noise(100, 1);
  const auto out = score_batch(ck, {good, bad, good});
  ASSERT_EQ(out.size(), 3U);
  EXPECT_TRUE(out[0].score.has_value());
  EXPECT_FALSE(out[1].score.has_value());
  EXPECT_FALSE(out[1].error.empty());
  EXPECT_EQ(*out[0].score, *out[2].score);
}

}  // namespace
}  // namespace dsq::nn
