#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "dsq/embed.hpp"
#include "dsq/embedding_store.hpp"
#include "dsq/error.hpp"
#include "dsq/loudness.hpp"
#include "dsq/pipeline/commands.hpp"
#include "dsq/pipeline/synth.hpp"
#include "dsq/wav.hpp"

namespace dsq::pipeline {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json base_config() {
  return {{"master_seed", 5},
          {"workers", 2},
          {"corpus_dir", "data/corpus"},
          {"rir_dir", "data/rirs"},
          {"noise_dir", "data/noises"},
          {"output_dir", "run"},
          {"partitions", {{"validation", 0.25}, {"test", 0.25}}},
          {"model",
           {{"conv_channels", 16}, {"d_model", 16}, {"n_layers", 1}, {"n_heads", 2}, {"ffn_dim", 32}, {"head_dim", 8}}},
          {"train",
           {{"epochs", 2},
            {"batch_size", 8},
            {"warmup_epochs", 1},
            {"decay_epochs", 1},
            {"lr_start", 1e-4},
            {"lr_peak", 1e-3},
            {"lr_end", 1e-4}}}};
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "dsq_pipeline_test";
    fs::remove_all(root_);
    SynthOptions o;
    o.n_sources = 10;
    o.min_duration_s = 5.0;
    o.max_duration_s = 6.0;
    o.seed = 3;
    synth_corpus(root_ / "data", o);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static RunConfig config(const std::string& out, nlohmann::json overrides = {}) {
    nlohmann::json j = base_config();
    j["output_dir"] = out;
    if (overrides.is_object()) j.merge_patch(overrides);
    return parse_config(j, root_);
  }

  static fs::path root_;
};

fs::path PipelineTest::root_;

TEST_F(PipelineTest, PrepareWritesManifestAndExcludesShortFile) {
  const RunConfig c = config("prep");
  const PrepareSummary s = cmd_prepare(c);
  EXPECT_EQ(s.sources, 11U);
  EXPECT_GT(s.segments, 10U);
  const RunLayout layout(c.output_dir);
  const auto segs = read_jsonl(layout.segments());
  ASSERT_EQ(segs.size(), s.segments);
  for (const auto& r : segs) {
    for (const char* key : {"segment_id", "source_path", "offset_s", "duration_s", "lufs_before", "partition", "path"}) {
      ASSERT_TRUE(r.contains(key)) << key;
    }
    EXPECT_DOUBLE_EQ(r.at("duration_s").get<double>(), 4.0);
    const AudioClip clip = read_wav_mono(layout.root / r.at("path").get<std::string>());
    EXPECT_NEAR(*measure_lufs(clip), -35.0, 0.01);
  }
  const auto excl = read_jsonl(layout.exclusions());
  bool short_found = false;
  for (const auto& r : excl) {
    EXPECT_TRUE(r.contains("excluded_reason"));
    short_found |= r.at("source_id") == "short/utt_short";
  }
  EXPECT_TRUE(short_found);
}

TEST_F(PipelineTest, PrepareIsByteStableAcrossReruns) {
  const RunConfig c = config("prep_stable");
  cmd_prepare(c);
  const std::string first = slurp(RunLayout(c.output_dir).segments());
  cmd_prepare(c);
  EXPECT_EQ(slurp(RunLayout(c.output_dir).segments()), first);
}

TEST_F(PipelineTest, EmptyCorpusGivesEmptyManifest) {
  fs::create_directories(root_ / "empty_corpus");
  const RunConfig c = config("prep_empty", {{"corpus_dir", "empty_corpus"}});
  EXPECT_EQ(cmd_prepare(c).segments, 0U);
  EXPECT_TRUE(read_jsonl(RunLayout(c.output_dir).segments()).empty());
}

TEST_F(PipelineTest, PartitionsDoNotLeakAcrossSources) {
  const RunConfig c = config("prep_parts");
  cmd_prepare(c);
  std::map<std::string, std::set<std::string>> parts;
  for (const auto& r : read_jsonl(RunLayout(c.output_dir).segments())) {
    parts[r.at("source_id")].insert(r.at("partition").get<std::string>());
  }
  for (const auto& [src, p] : parts) EXPECT_EQ(p.size(), 1U) << src;
}

TEST(Partition, FractionsFollowConfig) {
  const PartitionConfig pc{0.1, 0.2};
  std::map<std::string, int> n;
  for (int i = 0; i < 20000; ++i) ++n[partition_for("spk" + std::to_string(i % 97) + "/utt" + std::to_string(i), pc)];
  EXPECT_NEAR(n["validation"] / 20000.0, 0.1, 0.015);
  EXPECT_NEAR(n["test"] / 20000.0, 0.2, 0.015);
}

TEST_F(PipelineTest, DegradeProducesFourVariantsAndResumes) {
  const RunConfig c = config("deg");
  const PrepareSummary ps = cmd_prepare(c);
  const DegradeSummary ds = cmd_degrade(c);
  EXPECT_EQ(ds.pairs + ds.failed, 4 * ps.segments);
  const RunLayout layout(c.output_dir);
  const std::string full = slurp(layout.pairs());
  auto pairs = read_jsonl(layout.pairs());
  for (const auto& p : pairs) {
    EXPECT_EQ(p.at("audio_hash").get<std::string>(), file_hash(layout.root / p.at("degraded_path").get<std::string>()));
  }

  // Simulate an interruption: half the pairs journaled, the rest lost, plus a torn line.
  {
    std::ofstream journal(layout.pairs_journal());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (i % 2 == 0) {
        journal << pairs[i].dump() << '\n';
      } else {
        fs::remove(layout.root / pairs[i].at("degraded_path").get<std::string>());
      }
    }
    journal << "{\"pair_id\": \"tor";
  }
  fs::remove(layout.pairs());
  CommandOptions resume;
  resume.resume = true;
  const DegradeSummary again = cmd_degrade(c, resume);
  EXPECT_EQ(again.reused, (pairs.size() + 1) / 2);
  EXPECT_EQ(slurp(layout.pairs()), full);
}

TEST_F(PipelineTest, WorkerCountDoesNotChangeOutputs) {
  const RunConfig a = config("w1", {{"workers", 1}});
  const RunConfig b = config("w3", {{"workers", 3}});
  for (const auto* c : {&a, &b}) {
    cmd_prepare(*c);
    cmd_degrade(*c);
    cmd_index(*c);
  }
  const RunLayout la(a.output_dir), lb(b.output_dir);
  EXPECT_EQ(slurp(la.segments()), slurp(lb.segments()));
  EXPECT_EQ(slurp(la.pairs()), slurp(lb.pairs()));
  EXPECT_EQ(slurp(la.indexed()), slurp(lb.indexed()));
  EXPECT_EQ(slurp(la.builtin_store()), slurp(lb.builtin_store()));
}

TEST_F(PipelineTest, IndexScalesByTrainMaximum) {
  const RunConfig c = config("idx");
  cmd_prepare(c);
  cmd_degrade(c);
  const IndexSummary s = cmd_index(c);
  double train_max = 0.0;
  const auto rows = read_jsonl(RunLayout(c.output_dir).indexed());
  for (const auto& r : rows) {
    if (r.at("partition") == "train") train_max = std::max(train_max, r.at("embedding_distance").get<double>());
  }
  EXPECT_DOUBLE_EQ(s.scale, train_max);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.at("degradation_index").get<double>(), r.at("embedding_distance").get<double>() / train_max, 1e-12);
    EXPECT_EQ(r.at("provider_id"), BuiltinEmbedderConfig{}.provider_id());
  }
  const EmbeddingStore store = EmbeddingStore::read(RunLayout(c.output_dir).builtin_store());
  EXPECT_EQ(store.dim(), 128U);
}

TEST_F(PipelineTest, EndToEndWritesReports) {
  const RunConfig c = config("e2e");
  cmd_prepare(c);
  cmd_degrade(c);
  cmd_index(c);
  const TrainSummary ts = cmd_train(c);
  EXPECT_GT(ts.train_pairs, 0U);
  EXPECT_GE(ts.epoch_of_best, 0);
  const ScoreSummary ss = cmd_score(c);
  EXPECT_GT(ss.scored, 0U);
  EXPECT_GT(ss.clean_scored, 0U);
  const EvaluateSummary es = cmd_evaluate(c);
  EXPECT_FALSE(es.agreement.empty());
  const RunLayout layout(c.output_dir);
  for (const char* f : {"score_vs_target.jsonl", "analysis.json", "correlation.csv", "correlation.jsonl",
                        "score_distribution.json"}) {
    EXPECT_TRUE(fs::exists(layout.reports_dir() / f)) << f;
  }
  EXPECT_EQ(read_jsonl(layout.train_log()).size(), 2U);
}

TEST_F(PipelineTest, IngestScoresExternalPairs) {
  const RunConfig c = config("ingest");
  cmd_prepare(c);
  const auto segs = read_jsonl(RunLayout(c.output_dir).segments());
  ASSERT_GE(segs.size(), 2U);
  const fs::path list = root_ / "external_pairs.jsonl";
  {
    std::ofstream out(list);
    for (int i = 0; i < 2; ++i) {
      const std::string p = (RunLayout(c.output_dir).root / segs[i].at("path").get<std::string>()).string();
      out << nlohmann::json{{"pair_id", "ext" + std::to_string(i)}, {"clean_path", p}, {"degraded_path", p},
                            {"mos", 4.5}, {"room", "a"}}.dump()
          << '\n';
    }
  }
  CommandOptions o;
  o.manifest = list;
  const IngestSummary s = cmd_ingest(c, o);
  EXPECT_EQ(s.pairs, 2U);
  const auto rows = read_jsonl(RunLayout(c.output_dir).external());
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_NEAR(rows[0].at("embedding_distance").get<double>(), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(rows[0].at("external").at("mos").get<double>(), 4.5);
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const RunConfig c = parse_config(base_config(), "/data/exp");
  EXPECT_EQ(c.corpus_dir, fs::path("/data/exp/data/corpus"));
  EXPECT_EQ(c.output_dir, fs::path("/data/exp/run"));
  EXPECT_EQ(c.model.d_model, 16);
  EXPECT_EQ(c.train.epochs, 2);
}

TEST(Config, InvalidValuesRejected) {
  auto j = base_config();
  j["partitions"]["validation"] = 0.8;
  j["partitions"]["test"] = 0.5;
  EXPECT_THROW(parse_config(j, "/tmp"), InvalidInput);
  j = base_config();
  j["train"]["decay_epochs"] = 5;
  EXPECT_THROW(parse_config(j, "/tmp"), InvalidInput);
  j = base_config();
  j["workers"] = 0;
  EXPECT_THROW(parse_config(j, "/tmp"), InvalidInput);
}

TEST(Config, CodecCommandsKeyedByCanonicalName) {
  const RunConfig d = parse_config(base_config(), "/tmp");
  EXPECT_TRUE(d.codec.external.encode.count("ogg-vorbis"));
  auto j = base_config();
  j["degrade"] = {{"codec", {{"encode", {{"ogg", "true {in} {out}"}}}, {"decode", {{"ogg", "true {in} {out}"}}}}}};
  const RunConfig c = parse_config(j, "/tmp");
  EXPECT_TRUE(external_codec_available(CodecKind::kOggVorbis, c.codec.external));
}

TEST(Config, ResolvedSnapshotRoundTrips) {
  const RunConfig c = parse_config(base_config(), "/data/exp");
  const RunConfig d = parse_config(to_json(c), "/elsewhere");
  EXPECT_EQ(to_json(c), to_json(d));
}

TEST(Manifest, MalformedLineReportsLineNumber) {
  const fs::path p = fs::temp_directory_path() / "dsq_bad.jsonl";
  {
    std::ofstream out(p);
    out << "{\"a\": 1}\n{broken\n";
  }
  try {
    read_jsonl(p);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  fs::remove(p);
}

TEST(Manifest, SortRejectsDuplicates) {
  std::vector<Record> r{{{"id", "b"}}, {{"id", "a"}}, {{"id", "b"}}};
  EXPECT_THROW(sort_by_id(r, "id"), InvalidInput);
  std::vector<Record> ok{{{"id", "b"}}, {{"id", "a"}}};
  sort_by_id(ok, "id");
  EXPECT_EQ(ok[0]["id"], "a");
}

TEST(Manifest, FilenamesAreSafe) {
  EXPECT_EQ(id_to_filename("spk/utt:0001000#v2"), "spk_utt_0001000_v2");
}

#ifdef DSQ_CLI_PATH
int run_cli(const std::string& args) {
  const int status = std::system((std::string(DSQ_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fs::temp_directory_path() / "dsq_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "corpus");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("prepare --no-such-flag"), 1);
  EXPECT_EQ(run_cli("prepare --config " + (dir / "missing.json").string()), 1);

  auto j = base_config();
  j["corpus_dir"] = "corpus";
  j["rir_dir"] = "corpus";
  j["noise_dir"] = "corpus";
  j["embedding"] = {{"provider", "store"}, {"stores", {"missing.dsqemb"}}};
  std::ofstream(dir / "config.json") << j.dump();
  EXPECT_EQ(run_cli("prepare --config " + (dir / "config.json").string()), 0);
  EXPECT_EQ(run_cli("degrade --config " + (dir / "config.json").string()), 0);
  EXPECT_EQ(run_cli("index --config " + (dir / "config.json").string()), 2);
  EXPECT_EQ(run_cli("score --config " + (dir / "config.json").string()), 2);
  fs::remove_all(dir);
}
#endif

}  // namespace
}  // namespace dsq::pipeline
