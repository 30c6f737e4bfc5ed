#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "dsq/embed.hpp"
#include "dsq/embedding_store.hpp"
#include "dsq/error.hpp"
#include "dsq/degrade.hpp"
#include "dsq/pipeline/synth.hpp"
#include "dsq/stats.hpp"

namespace dsq {
namespace {

namespace fs = std::filesystem;

Embedding vec(std::vector<float> v, std::string p = "p") { return {std::move(v), std::move(p)}; }

TEST(Cosine, SpecialCases) {
  EXPECT_NEAR(cosine_distance(vec({1, 2, 3}), vec({1, 2, 3})), 0.0, 1e-12);
  EXPECT_NEAR(cosine_distance(vec({1, 0}), vec({0, 5})), 1.0, 1e-12);
  EXPECT_NEAR(cosine_distance(vec({1, -2, 3}), vec({-1, 2, -3})), 2.0, 1e-12);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_distance(vec({0, 0}), vec({1, 0})), InvalidInput);
  EXPECT_THROW(cosine_distance(vec({1, 0}), vec({1, 0, 0})), InvalidInput);
  EXPECT_THROW(cosine_distance(vec({1, 0}, "a"), vec({1, 0}, "b")), InvalidInput);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  std::uniform_real_distribution<float> s(0.01F, 100.0F);
  for (int i = 0; i < 500; ++i) {
    std::vector<float> a(16), b(16);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    const double d = cosine_distance(vec(a), vec(b));
    EXPECT_NEAR(cosine_distance(vec(b), vec(a)), d, 1e-9);
    std::vector<float> as = a;
    const float k = s(rng);
    for (auto& x : as) x *= k;
    EXPECT_NEAR(cosine_distance(vec(as), vec(b)), d, 1e-6);
    EXPECT_NEAR(cosine_distance(vec(a), vec(as)), 0.0, 1e-6);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}

TEST(Scale, MaxOfDistances) {
  const std::vector<double> d{0.2, 1.18, 0.9};
  EXPECT_DOUBLE_EQ(compute_scale(d).scale, 1.18);
  EXPECT_DOUBLE_EQ(compute_scale(std::vector<double>{0.3}).scale, 0.3);
  EXPECT_THROW(compute_scale(std::vector<double>{}), InvalidInput);
  EXPECT_THROW(compute_scale(std::vector<double>{0.0, 0.0}), InvalidInput);
}

TEST(Scale, IndexIsLinearAndUnclamped) {
  const IndexScale s{1.18};
  EXPECT_DOUBLE_EQ(degradation_index(1.18, s), 1.0);
  EXPECT_DOUBLE_EQ(degradation_index(0.0, s), 0.0);
  EXPECT_DOUBLE_EQ(degradation_index(0.59, s), 0.5);
  EXPECT_GT(degradation_index(1.5, s), 1.0);
  EXPECT_LT(degradation_index(0.4, s), degradation_index(0.41, s));
}

TEST(MelFilterbank, TrianglesPeakAtMelSpacedCenters) {
  const int n_mels = 10, n_fft = 512, sr = 16000;
  const auto fb = mel_filterbank(n_mels, n_fft, sr, 0.0, 8000.0);
  const int bins = n_fft / 2 + 1;
  const double mel_max = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  for (int m = 0; m < n_mels; ++m) {
    const double center_hz = 700.0 * (std::pow(10.0, mel_max * (m + 1) / (n_mels + 1) / 2595.0) - 1.0);
    int argmax = 0;
    for (int k = 0; k < bins; ++k) {
      ASSERT_GE(fb[m * bins + k], 0.0);
      ASSERT_LE(fb[m * bins + k], 1.0);
      if (fb[m * bins + k] > fb[m * bins + argmax]) argmax = k;
    }
    EXPECT_NEAR(argmax * double(sr) / n_fft, center_hz, double(sr) / n_fft);
  }
}

AudioClip speech(double seconds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return pipeline::synth_speech(seconds, 16000, rng);
}

TEST(BuiltinEmbed, ShapeAndDeterminism) {
  const AudioClip c = speech(2.0, 1);
  const Embedding a = builtin_embed(c), b = builtin_embed(c);
  EXPECT_EQ(a.dim(), 128U);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(cosine_distance(a, b), 0.0);
  for (float v : a.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NE(a.provider_id.find("mels=64"), std::string::npos);
}

TEST(BuiltinEmbed, RejectsShortOrWrongRate) {
  AudioClip c;
  c.samples.assign(1500, 0.1F);
  EXPECT_THROW(builtin_embed(c), InvalidInput);
  c.samples.assign(16000, 0.1F);
  c.sample_rate = 8000;
  EXPECT_THROW(builtin_embed(c), InvalidInput);
}

TEST(BuiltinEmbed, NearlyInvariantToGain) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AudioClip c = speech(3.0, seed);
    AudioClip louder = c;
    for (float& s : louder.samples) s *= 3.0F;
    EXPECT_LT(cosine_distance(builtin_embed(c), builtin_embed(louder)), 0.05);
  }
}

TEST(BuiltinEmbed, DistanceFallsAsSnrRises) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> snr(-30.0, 30.0);
  std::vector<double> snrs, dists;
  for (int i = 0; i < 200; ++i) {
    const AudioClip clean = speech(2.0, 100 + i);
    std::mt19937_64 nrng(1000 + i);
    AudioClip noise = pipeline::synth_noise(i % 6, 2.0, 16000, nrng);
    noise.samples.resize(clean.size());
    const double s = snr(rng);
    snrs.push_back(s);
    dists.push_back(cosine_distance(builtin_embed(clean), builtin_embed(mix_noise(clean, noise, s))));
  }
  EXPECT_LE(spearman(snrs, dists).statistic, -0.4);
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

TEST(Store, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  EmbeddingStore store("model=x;rev=1;layer=last;pool=mean", 128);
  for (int i = 0; i < 1000; ++i) {
    std::vector<float> v(128);
    for (auto& x : v) x = g(rng);
    store.add("seg/" + std::to_string(i), v);
  }
  const fs::path p = temp("dsq_store_roundtrip.dsqemb");
  store.write(p);
  const EmbeddingStore back = EmbeddingStore::read(p);
  EXPECT_EQ(back.provider_id(), store.provider_id());
  EXPECT_EQ(back.dim(), 128U);
  ASSERT_EQ(back.size(), 1000U);
  EXPECT_EQ(back.ids(), store.ids());
  for (const auto& id : store.ids()) {
    const auto a = store.get(id).values, b = back.get(id).values;
    ASSERT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  }
  fs::remove(p);
}

TEST(Store, DuplicateAndDimErrors) {
  EmbeddingStore store("p", 4);
  store.add("a", {1, 2, 3, 4});
  EXPECT_THROW(store.add("a", {1, 2, 3, 4}), InvalidInput);
  EXPECT_THROW(store.add("b", {1, 2, 3}), InvalidInput);
  EXPECT_THROW(store.get("zzz"), EnvironmentError);
}

// Independent byte-level writer for the documented layout.
void write_raw(const fs::path& p, std::uint32_t dim, const std::string& provider,
               const std::vector<std::pair<std::string, std::vector<float>>>& records, std::uint64_t count) {
  std::ofstream out(p, std::ios::binary);
  auto u16 = [&](std::uint16_t v) { out.put(char(v & 0xFF)).put(char(v >> 8)); };
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) out.put(char((v >> (8 * i)) & 0xFF)); };
  auto u64 = [&](std::uint64_t v) { for (int i = 0; i < 8; ++i) out.put(char((v >> (8 * i)) & 0xFF)); };
  out.write("DSQEMB01", 8);
  u32(1);
  u32(dim);
  u64(count);
  u32(static_cast<std::uint32_t>(provider.size()));
  out << provider;
  for (const auto& [id, v] : records) {
    u16(static_cast<std::uint16_t>(id.size()));
    out << id;
    for (float f : v) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      u32(bits);
    }
  }
}

TEST(Store, ReadsIndependentlyWrittenFile) {
  const fs::path p = temp("dsq_store_raw.dsqemb");
  write_raw(p, 3, "prov", {{"x", {1.5F, -2.0F, 0.25F}}, {"y", {0.0F, 1.0F, 2.0F}}}, 2);
  const EmbeddingStore s = EmbeddingStore::read(p);
  EXPECT_EQ(s.provider_id(), "prov");
  EXPECT_EQ(s.get("x").values, (std::vector<float>{1.5F, -2.0F, 0.25F}));
  EXPECT_EQ(s.get("y").values, (std::vector<float>{0.0F, 1.0F, 2.0F}));

  // Our writer produces the same bytes.
  EmbeddingStore w("prov", 3);
  w.add("x", {1.5F, -2.0F, 0.25F});
  w.add("y", {0.0F, 1.0F, 2.0F});
  const fs::path q = temp("dsq_store_ours.dsqemb");
  w.write(q);
  std::ifstream a(p, std::ios::binary), b(q, std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(a)), {}), bb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(ba, bb);
  fs::remove(p);
  fs::remove(q);
}

TEST(Store, ShortRecordIsCorrupt) {
  const fs::path p = temp("dsq_store_short.dsqemb");
  write_raw(p, 128, "prov", {{"x", std::vector<float>(64, 1.0F)}}, 1);
  EXPECT_THROW(EmbeddingStore::read(p), InvalidInput);
  fs::remove(p);
}

TEST(Store, DuplicateIdInFileRejected) {
  const fs::path p = temp("dsq_store_dup.dsqemb");
  write_raw(p, 1, "prov", {{"x", {1.0F}}, {"x", {2.0F}}}, 2);
  EXPECT_THROW(EmbeddingStore::read(p), InvalidInput);
  fs::remove(p);
}

TEST(Store, BadMagicRejected) {
  const fs::path p = temp("dsq_store_magic.dsqemb");
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOTASTORE-------------------------";
  }
  EXPECT_THROW(EmbeddingStore::read(p), InvalidInput);
  fs::remove(p);
}

}  // namespace
}  // namespace dsq
