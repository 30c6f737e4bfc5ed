// Acceptance gate: runs every primary criterion and prints one PASS/FAIL line each.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dsq/butterworth.hpp"
#include "dsq/degrade.hpp"
#include "dsq/loudness.hpp"
#include "dsq/metrics.hpp"
#include "dsq/nn/model.hpp"
#include "dsq/nn/train.hpp"
#include "dsq/pipeline/commands.hpp"
#include "dsq/pipeline/synth.hpp"
#include "dsq/recipe.hpp"
#include "dsq/stats.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
namespace pl = dsq::pipeline;
using dsq::AudioClip;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt_double(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double power(const std::vector<float>& v) {
  double acc = 0.0;
  for (float s : v) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(v.size());
}

AudioClip sine(double freq, double amp, double seconds, int sr) {
  AudioClip c;
  c.sample_rate = sr;
  c.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < c.size(); ++i) {
    c.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr));
  }
  return c;
}

dsq::AssetBank toy_assets(std::mt19937_64& rng) {
  dsq::AssetBank bank;
  for (int i = 0; i < 4; ++i) {
    bank.noises["noise" + std::to_string(i)] = pl::synth_noise(i, 5.0, 16000, rng);
    bank.rirs["rir" + std::to_string(i)] = pl::synth_rir(0.2 + 0.2 * i, 16000, rng);
  }
  return bank;
}

// ---------------------------------------------------------------------------

Outcome snr_mixing() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> snr(-30.0, 30.0), dur(1.0, 4.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double seconds = dur(rng);
    const AudioClip speech = pl::synth_speech(seconds, 16000, rng);
    AudioClip noise = pl::synth_noise(i % 6, seconds + 0.5, 16000, rng);
    noise.samples.resize(speech.size());
    const double target = snr(rng);
    const AudioClip mixed = dsq::mix_noise(speech, noise, target);
    std::vector<float> residual(speech.size());
    for (std::size_t k = 0; k < speech.size(); ++k) residual[k] = mixed.samples[k] - speech.samples[k];
    const double measured = 10.0 * std::log10(power(speech.samples) / power(residual));
    worst = std::max(worst, std::abs(measured - target));
  }
  return {worst <= 0.01, "1000 triples, max |SNR error| = " + fmt_double(worst, 3) + " dB (limit 0.01)"};
}

Outcome loudness() {
  std::mt19937_64 rng(202);
  const dsq::AssetBank bank = toy_assets(rng);
  const dsq::AssetCatalog catalog = bank.catalog();
  double worst = 0.0;
  int measured = 0, gated = 0;
  for (int i = 0; measured < 100; ++i) {
    const AudioClip clean = dsq::normalize_lufs(pl::synth_speech(4.0, 16000, rng));
    const auto recipe = dsq::draw_recipe(202, "seg" + std::to_string(i), 0, catalog);
    const auto applied = dsq::apply_recipe(clean, recipe, bank);
    if (!applied.loudness_normalized) {
      ++gated;
      continue;
    }
    worst = std::max(worst, std::abs(*dsq::measure_lufs(applied.clip) + 35.0));
    ++measured;
  }
  double sine_err = 0.0;
  for (int sr : {16000, 48000}) {
    sine_err = std::max(sine_err, std::abs(*dsq::measure_lufs(sine(997.0, 1.0, 5.0, sr)) + 3.01));
  }
  const bool pass = worst <= 0.2 && sine_err <= 0.1;
  return {pass, "100 degraded outputs max |L+35| = " + fmt_double(worst, 3) + " LU (" + std::to_string(gated) +
                    " fully gated skipped); 997 Hz sine error " + fmt_double(sine_err, 3) + " LU"};
}

Outcome filtering() {
  const double sr = 16000.0;
  double single_err = 0.0, double_err = 0.0;
  bool lag0 = true;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto kind : {dsq::FilterKind::kLowPass, dsq::FilterKind::kHighPass}) {
    for (double fc : {100.0, 500.0, 1000.0, 3000.0}) {
      const auto sos = dsq::design_butterworth({4, kind, fc}, sr);
      const double db = 20.0 * std::log10(std::abs(dsq::frequency_response(sos, fc, sr)));
      single_err = std::max(single_err, std::abs(db + 3.0103));

      const AudioClip tone = sine(fc, 0.5, 4.0, static_cast<int>(sr));
      const AudioClip out = dsq::filtfilt(sos, tone);
      const std::size_t lo = tone.size() / 4, hi = 3 * tone.size() / 4;
      double po = 0.0, pi = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        po += static_cast<double>(out.samples[k]) * out.samples[k];
        pi += static_cast<double>(tone.samples[k]) * tone.samples[k];
      }
      double_err = std::max(double_err, std::abs(10.0 * std::log10(po / pi) + 6.0206));

      AudioClip noise;
      noise.sample_rate = static_cast<int>(sr);
      noise.samples.resize(16000);
      for (float& s : noise.samples) s = static_cast<float>(g(rng));
      const AudioClip filtered = dsq::filtfilt(sos, noise);
      auto xcorr = [&](long lag) {
        double acc = 0.0;
        for (long k = 200; k + 200 < static_cast<long>(noise.size()); ++k) {
          acc += static_cast<double>(filtered.samples[static_cast<std::size_t>(k + lag)]) *
                 noise.samples[static_cast<std::size_t>(k)];
        }
        return acc;
      };
      const double c0 = xcorr(0);
      for (long lag = -20; lag <= 20; ++lag) {
        if (lag != 0 && xcorr(lag) >= c0) lag0 = false;
      }
    }
  }
  const bool pass = single_err <= 0.05 && double_err <= 0.1 && lag0;
  return {pass, "single-pass max |dB+3.01| = " + fmt_double(single_err, 3) + ", filtfilt max |dB+6.02| = " +
                    fmt_double(double_err, 3) + ", lag-0 peak " + (lag0 ? "yes" : "no")};
}

Outcome convolution() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> len(1, 4000), rlen(1, 1500);
  std::normal_distribution<double> g(0.0, 0.3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    AudioClip x, h;
    x.sample_rate = h.sample_rate = 16000;
    x.samples.resize(len(rng));
    h.samples.resize(rlen(rng));
    for (float& s : x.samples) s = static_cast<float>(g(rng));
    for (float& s : h.samples) s = static_cast<float>(g(rng) / std::sqrt(static_cast<double>(h.size())));
    const AudioClip y = dsq::convolve_rir(x, h);
    for (std::size_t n = 0; n < x.size(); ++n) {
      double acc = 0.0;
      for (std::size_t k = 0; k < h.size() && k <= n; ++k) acc += static_cast<double>(h.samples[k]) * x.samples[n - k];
      worst = std::max(worst, std::abs(acc - static_cast<double>(y.samples[n])));
    }
  }
  return {worst < 1e-6, "100 instances, max |FFT - direct| = " + fmt_double(worst, 3)};
}

Outcome recipe_statistics() {
  const dsq::AssetCatalog catalog{{"rirA", "rirB"}, {"noiseA", "noiseB"}};
  const std::vector<std::pair<dsq::StepSlot, double>> expected{
      {dsq::StepSlot::kFilter1, 0.15}, {dsq::StepSlot::kRir1, 0.15},    {dsq::StepSlot::kNoise, 0.25},
      {dsq::StepSlot::kFilter2, 0.15}, {dsq::StepSlot::kRir2, 0.15 * 0.85}, {dsq::StepSlot::kCodec, 0.25}};
  std::map<dsq::StepSlot, int> hits;
  int double_rir = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto r = dsq::draw_recipe(77, "seg" + std::to_string(i / 4), i % 4, catalog);
    for (const auto& s : r.steps) ++hits[s.slot];
    double_rir += r.has(dsq::StepSlot::kRir1) && r.has(dsq::StepSlot::kRir2);
  }
  double worst = 0.0;
  std::string freqs;
  for (const auto& [slot, p] : expected) {
    const double f = hits[slot] / static_cast<double>(n);
    worst = std::max(worst, std::abs(f - p));
    freqs += dsq::slot_name(slot) + "=" + fmt_double(f, 4) + " ";
  }
  return {worst <= 0.01 && double_rir == 0,
          "100000 draws: " + freqs + "max dev " + fmt_double(worst, 3) + ", double-RIR " + std::to_string(double_rir)};
}

std::vector<double> tied_sample(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 5);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

Outcome statistics_oracles() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<std::size_t> len(4, 8);
  int n_sp = 0, n_rs = 0, n_kw = 0, n_ed = 0;
  std::vector<std::string> failures;

  for (int i = 0; n_sp < 25 && i < 200; ++i) {
    const std::size_t n = len(rng);
    const auto x = tied_sample(n, rng), y = tied_sample(n, rng);
    const double want = dsq::oracle::spearman(x, y);
    if (std::isnan(want) || std::abs(want) >= 1.0) continue;
    const auto r = dsq::spearman(x, y);
    const double t = want * std::sqrt((n - 2.0) / (1.0 - want * want));
    if (std::abs(r.statistic - want) > 1e-9 ||
        std::abs(r.p_value - dsq::oracle::student_t_two_sided(t, n - 2.0)) > 1e-6) {
      failures.push_back("spearman#" + std::to_string(i));
    }
    ++n_sp;
  }

  // The stated small case: W minimal, normal p close to the exact enumeration.
  {
    const std::vector<double> x{1, 2, 3}, y{10, 11, 12};
    const auto r = dsq::wilcoxon_rank_sum(x, y);
    if (r.statistic != 6.0 || std::abs(r.p_value - dsq::oracle::rank_sum_exact_p(x, y)) > 0.10) {
      failures.push_back("ranksum-123");
    }
  }
  for (int i = 0; n_rs < 25 && i < 200; ++i) {
    const auto x = tied_sample(len(rng) - 1, rng), y = tied_sample(len(rng) - 1, rng);
    const auto r = dsq::wilcoxon_rank_sum(x, y);
    if (r.degenerate) continue;
    if (std::abs(r.statistic - dsq::oracle::rank_sum_w(x, y)) > 1e-12 ||
        std::abs(dsq::wilcoxon_rank_sum_exact_p(x, y) - dsq::oracle::rank_sum_exact_p(x, y)) > 1e-12 ||
        std::abs(r.p_value - dsq::oracle::rank_sum_normal_p(x, y)) > 1e-9) {
      failures.push_back("ranksum#" + std::to_string(i));
    }
    ++n_rs;
  }

  std::uniform_int_distribution<int> groups(2, 4);
  std::uniform_int_distribution<std::size_t> glen(2, 6);
  for (int i = 0; n_kw < 25 && i < 200; ++i) {
    std::vector<std::vector<double>> g(static_cast<std::size_t>(groups(rng)));
    for (auto& s : g) s = tied_sample(glen(rng), rng);
    const double h = dsq::oracle::kruskal_h(g);
    if (std::isnan(h)) continue;
    const auto r = dsq::kruskal_wallis(g);
    if (std::abs(r.statistic - h) > 1e-9 ||
        std::abs(r.p_value - dsq::oracle::chi2_sf(h, static_cast<int>(g.size()) - 1)) > 1e-9) {
      failures.push_back("kruskal#" + std::to_string(i));
    }
    ++n_kw;
  }

  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  std::uniform_int_distribution<std::size_t> wlen(1, 7), word(0, vocab.size() - 1), hlen(0, 7);
  for (; n_ed < 25; ++n_ed) {
    std::vector<std::string> ref(wlen(rng)), hyp(hlen(rng));
    for (auto& w : ref) w = vocab[word(rng)];
    for (auto& w : hyp) w = vocab[word(rng)];
    const double want = static_cast<double>(dsq::oracle::edit_distance(ref, hyp)) / static_cast<double>(ref.size());
    if (std::abs(dsq::edit_rate(ref, hyp) - want) > 1e-12) failures.push_back("edit#" + std::to_string(n_ed));
  }

  std::string detail = "instances: spearman " + std::to_string(n_sp) + ", rank-sum " + std::to_string(n_rs + 1) +
                       ", kruskal-wallis " + std::to_string(n_kw) + ", edit-rate " + std::to_string(n_ed);
  for (const auto& f : failures) detail += "; mismatch " + f;
  return {failures.empty() && n_sp >= 20 && n_rs >= 20 && n_kw >= 20 && n_ed >= 20, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Relative path -> contents for every artifact prepare/degrade/index leave behind.
std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const char* sub : {"manifests", "segments", "degraded", "embeddings"}) {
    if (!fs::exists(root / sub)) continue;
    for (const auto& e : fs::recursive_directory_iterator(root / sub)) {
      if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  pl::SynthOptions so;
  so.n_sources = 16;
  so.seed = 9;
  pl::synth_corpus(root / "data", so);

  auto run = [&](const std::string& name, int workers) {
    nlohmann::json j{{"master_seed", 21},
                     {"workers", workers},
                     {"corpus_dir", "data/corpus"},
                     {"rir_dir", "data/rirs"},
                     {"noise_dir", "data/noises"},
                     {"output_dir", name}};
    const pl::RunConfig c = pl::parse_config(j, root);
    pl::cmd_prepare(c);
    pl::cmd_degrade(c);
    pl::cmd_index(c);
    return artifacts(root / name);
  };
  const auto a = run("run_a", 1);
  const auto b = run("run_b", 1);
  const auto c = run("run_c", 8);
  std::size_t pairs = 0;
  for (const auto& [k, v] : a) pairs += k.starts_with("degraded/");
  const bool pass = !a.empty() && a == b && a == c;
  return {pass, std::to_string(a.size()) + " files (" + std::to_string(pairs) +
                    " degraded clips); rerun identical: " + (a == b ? "yes" : "no") +
                    "; workers 1 vs 8 identical: " + (a == c ? "yes" : "no")};
}

Outcome model_shape() {
  const dsq::nn::ModelConfig def;
  const dsq::nn::ModelConfig abl = dsq::nn::ModelConfig::ablation();
  const auto n_def = static_cast<double>(dsq::nn::parameter_count(def));
  const auto n_abl = static_cast<double>(dsq::nn::parameter_count(abl));
  const bool sizes = std::abs(n_def / 14.7e6 - 1.0) <= 0.05 && std::abs(n_abl / 28.6e6 - 1.0) <= 0.05;

  dsq::nn::Model m(def);
  m.init(1);
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> dur(1.0, 4.0);
  int mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    const auto n = static_cast<std::size_t>(dur(rng) * 16000.0);
    std::vector<float> x(n, 0.0F);
    if (m.encoder_length(x) != dsq::nn::frame_count(def, static_cast<Eigen::Index>(n))) ++mismatches;
  }
  return {sizes && mismatches == 0,
          "default " + fmt_double(n_def / 1e6, 5) + " M (target 14.7), ablation " + fmt_double(n_abl / 1e6, 5) +
              " M (target 28.6); frame_count mismatches " + std::to_string(mismatches) + "/50"};
}

Outcome lr_anchors() {
  const dsq::nn::TrainConfig tc;
  const double a = dsq::nn::lr_at(0.0, tc), b = dsq::nn::lr_at(15.0, tc), c = dsq::nn::lr_at(40.0, tc);
  char buf[160];
  std::snprintf(buf, sizeof buf, "lr(0)=%.17g lr(15)=%.17g lr(40)=%.17g", a, b, c);
  return {a == 1e-5 && b == 5e-4 && c == 5e-9, buf};
}

dsq::nn::ModelConfig desk_model() {
  dsq::nn::ModelConfig m;
  m.conv_channels = 32;
  m.d_model = 96;
  m.n_layers = 2;
  m.n_heads = 8;
  m.ffn_dim = 384;
  m.head_dim = 32;
  return m;
}

Outcome overfit() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<float> target(0.05F, 0.95F);
  std::vector<AudioClip> clips;
  std::vector<float> targets;
  for (int i = 0; i < 8; ++i) {
    clips.push_back(dsq::normalize_lufs(pl::synth_speech(2.0, 16000, rng)));
    targets.push_back(target(rng));
  }
  dsq::nn::Model m(desk_model());
  m.init(7);
  dsq::nn::Trainer tr(m, 1, 7);
  int reached = -1;
  double mse = 0.0;
  for (int s = 1; s <= 500; ++s) {
    tr.step(clips, targets, 1e-4, false);
    if (s % 10 == 0) {
      mse = tr.evaluate(clips, targets);
      if (mse < 1e-3 && reached < 0) reached = s;
    }
  }
  mse = tr.evaluate(clips, targets);
  return {mse < 1e-3, "final train MSE " + fmt_double(mse, 3) + " after 500 steps at lr 1e-4" +
                          (reached > 0 ? ", first below 1e-3 at step " + std::to_string(reached) : "")};
}

struct DeskRun {
  bool ran = false;
  std::string error;
  std::size_t pairs = 0;
  pl::EvaluateSummary eval;
};

DeskRun desk_run(const fs::path& work) {
  DeskRun out;
  const fs::path root = work / "desk";
  fs::remove_all(root);
  pl::SynthOptions so;
  so.n_sources = 200;
  so.min_duration_s = 5.5;
  so.max_duration_s = 7.5;
  so.seed = 11;
  pl::synth_corpus(root / "data", so);

  nlohmann::json model;
  dsq::nn::to_json(model, desk_model());
  nlohmann::json j{{"master_seed", 11},
                   {"workers", 1},
                   {"corpus_dir", "data/corpus"},
                   {"rir_dir", "data/rirs"},
                   {"noise_dir", "data/noises"},
                   {"output_dir", "run"},
                   {"partitions", {{"validation", 0.1}, {"test", 0.15}}},
                   {"model", model},
                   {"train",
                    {{"epochs", 10},
                     {"batch_size", 16},
                     {"lr_start", 1e-4},
                     {"lr_peak", 1e-3},
                     {"lr_end", 1e-5},
                     {"warmup_epochs", 1},
                     {"decay_epochs", 9},
                     {"seed", 3}}}};
  std::ofstream(root / "config.json") << j.dump(2) << '\n';
  try {
    const pl::RunConfig c = pl::parse_config(j, root);
    pl::cmd_prepare(c);
    out.pairs = pl::cmd_degrade(c).pairs;
    pl::cmd_index(c);
    pl::cmd_train(c);
    pl::cmd_score(c);
    out.eval = pl::cmd_evaluate(c);
    out.ran = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

Outcome desk_end_to_end(const DeskRun& d) {
  if (!d.ran) return {false, "desk run failed: " + d.error};
  const pl::PartitionAgreement* held = nullptr;
  for (const auto& a : d.eval.agreement) {
    if (a.partition == "held-out") held = &a;
  }
  std::string parts;
  for (const auto& a : d.eval.agreement) {
    parts += " " + a.partition + "(n=" + std::to_string(a.n) + ") rs=" + fmt_double(a.spearman.statistic, 3);
  }
  const bool rs_ok = held != nullptr && !held->spearman.degenerate && held->spearman.statistic >= 0.7;
  const bool med_ok = d.eval.clean_median && d.eval.noisy_median && *d.eval.clean_median < *d.eval.noisy_median;
  return {rs_ok && med_ok,
          std::to_string(d.pairs) + " pairs;" + parts + "; clean median " +
              (d.eval.clean_median ? fmt_double(*d.eval.clean_median, 3) : "n/a") + " vs noisy (SNR<=0) median " +
              (d.eval.noisy_median ? fmt_double(*d.eval.noisy_median, 3) : "n/a")};
}

Outcome analysis(const DeskRun& d) {
  if (!d.ran) return {false, "desk run failed: " + d.error};
  const auto it = d.eval.presence_tests.find("noise");
  const bool noise_ok = it != d.eval.presence_tests.end() && !it->second.degenerate && it->second.p_value < 0.01;
  const bool snr_ok = d.eval.distance_vs_snr && !d.eval.distance_vs_snr->degenerate &&
                      d.eval.distance_vs_snr->statistic <= -0.4;
  std::string detail = "noise present vs absent rank-sum p = ";
  detail += it != d.eval.presence_tests.end() ? fmt_double(it->second.p_value, 3) : "n/a";
  detail += "; SNR vs distance rs = ";
  detail += d.eval.distance_vs_snr ? fmt_double(d.eval.distance_vs_snr->statistic, 3) + " (n=" +
                                         std::to_string(d.eval.distance_vs_snr->n) + ")"
                                   : "n/a";
  return {noise_ok && snr_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "dsq_acceptance";
  std::vector<std::string> only;
  app.add_option("--work-dir", work, "Scratch directory for pipeline runs");
  app.add_option("--only", only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  spdlog::set_level(spdlog::level::err);

  std::optional<DeskRun> desk;
  auto get_desk = [&]() -> const DeskRun& {
    if (!desk) desk = desk_run(work);
    return *desk;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"snr-mixing", snr_mixing},
      {"loudness", loudness},
      {"filtering", filtering},
      {"convolution", convolution},
      {"recipe-statistics", recipe_statistics},
      {"statistics-oracles", statistics_oracles},
      {"determinism", [&] { return determinism(work); }},
      {"model-shape", model_shape},
      {"lr-anchors", lr_anchors},
      {"overfit", overfit},
      {"desk-end-to-end", [&] { return desk_end_to_end(get_desk()); }},
      {"analysis-harness", [&] { return analysis(get_desk()); }},
  };

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-20s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
