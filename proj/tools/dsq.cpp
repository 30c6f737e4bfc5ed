// dsq: command-line front end for the degradation/scoring pipeline.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <iostream>
#include <string>

#include "dsq/error.hpp"
#include "dsq/nn/train.hpp"
#include "dsq/pipeline/commands.hpp"
#include "dsq/pipeline/config.hpp"
#include "dsq/pipeline/synth.hpp"

namespace {

namespace pl = dsq::pipeline;

constexpr int kExitOk = 0;
constexpr int kExitInvalidInput = 1;
constexpr int kExitEnvironment = 2;
constexpr int kExitInternal = 3;

struct Args {
  std::string config;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string partition;
  std::string provider;
  bool resume = false;
  std::string manifest;
};

void add_common(CLI::App* sub, Args& a, bool needs_manifest = false) {
  sub->add_option("--config", a.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "Override the master seed");
  sub->add_option("--workers", a.workers, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--partition", a.partition, "Restrict to one partition")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  sub->add_option("--provider", a.provider, "Expected embedding provider id ('builtin' accepted)");
  sub->add_flag("--resume", a.resume, "Reuse completed outputs from an interrupted run");
  auto* m = sub->add_option("--manifest", a.manifest, "Input manifest override");
  if (needs_manifest) m->required();
}

pl::CommandOptions to_options(const Args& a, const CLI::App* sub) {
  pl::CommandOptions o;
  if (sub->count("--seed") > 0) o.seed = a.seed;
  if (a.workers > 0) o.workers = a.workers;
  if (!a.partition.empty()) o.partition = a.partition;
  if (!a.provider.empty()) o.provider = a.provider;
  o.resume = a.resume;
  o.manifest = a.manifest;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-free speech degradation scoring pipeline"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));

  Args args;
  auto* prepare = app.add_subcommand("prepare", "Resample, trim, segment and loudness-normalize the corpus");
  auto* degrade = app.add_subcommand("degrade", "Draw and apply degradation recipes to every segment");
  auto* index = app.add_subcommand("index", "Embed clean/degraded audio and compute degradation indices");
  auto* train = app.add_subcommand("train", "Train the score regressor on indexed pairs");
  auto* score = app.add_subcommand("score", "Score degraded audio (and clean segments) with a checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Agreement, correlation and manipulation reports");
  auto* ingest = app.add_subcommand("ingest", "Ingest externally paired clean/degraded files");
  for (auto* sub : {prepare, degrade, index, train, score, evaluate}) add_common(sub, args);
  add_common(ingest, args, /*needs_manifest=*/true);

  pl::SynthOptions synth_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic toy corpus with noise and RIR assets");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--sources", synth_opts.n_sources, "Number of source recordings");
  synth->add_option("--min-duration", synth_opts.min_duration_s, "Shortest source (s)");
  synth->add_option("--max-duration", synth_opts.max_duration_s, "Longest source (s)");
  synth->add_option("--seed", synth_opts.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidInput;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  try {
    if (synth->parsed()) {
      pl::synth_corpus(synth_out, synth_opts);
      return kExitOk;
    }
    CLI::App* sub = app.get_subcommands().front();
    const pl::CommandOptions options = to_options(args, sub);
    const pl::RunConfig config = pl::apply_overrides(pl::load_config(args.config), options);
    if (prepare->parsed()) pl::cmd_prepare(config, options);
    if (degrade->parsed()) pl::cmd_degrade(config, options);
    if (index->parsed()) pl::cmd_index(config, options);
    if (train->parsed()) pl::cmd_train(config, options);
    if (score->parsed()) pl::cmd_score(config, options);
    if (evaluate->parsed()) pl::cmd_evaluate(config, options);
    if (ingest->parsed()) pl::cmd_ingest(config, options);
  } catch (const dsq::InvalidInput& e) {
    spdlog::error("{}", e.what());
    return kExitInvalidInput;
  } catch (const dsq::EnvironmentError& e) {
    spdlog::error("{}", e.what());
    return kExitEnvironment;
  } catch (const dsq::nn::TrainingDiverged& e) {
    spdlog::error("training diverged: {}", e.what());
    return kExitInternal;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
  return kExitOk;
}
