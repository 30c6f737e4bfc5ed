#include "dsq/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "dsq/error.hpp"

namespace dsq::nn {
namespace {

// Fixed number of gradient partials per batch, independent of the thread count, so
// the reduction order (and thus the result) does not depend on parallelism.
constexpr std::size_t kGradientChunks = 8;

template <typename Fn>
void run_chunks(std::size_t chunks, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < std::min(workers, chunks); ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t chunks, std::size_t c) {
  return {n * c / chunks, n * (c + 1) / chunks};
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidInput("train config: " + m); };
  if (epochs <= 0 || batch_size <= 0) fail("epochs and batch_size must be positive");
  if (!(lr_start > 0 && lr_peak > 0 && lr_end > 0)) fail("learning rates must be positive");
  if (warmup_epochs < 0 || decay_epochs < 0) fail("warmup/decay epochs must be nonnegative");
  if (std::abs(warmup_epochs + decay_epochs - epochs) > 1e-9) fail("warmup_epochs + decay_epochs must equal epochs");
  if (!(truncate_min_s > 0 && truncate_min_s <= truncate_max_s)) fail("need 0 < truncate_min_s <= truncate_max_s");
  if (threads <= 0) fail("threads must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr_start", c.lr_start},
                     {"lr_peak", c.lr_peak},
                     {"lr_end", c.lr_end},
                     {"warmup_epochs", c.warmup_epochs},
                     {"decay_epochs", c.decay_epochs},
                     {"truncate_min_s", c.truncate_min_s},
                     {"truncate_max_s", c.truncate_max_s},
                     {"seed", c.seed},
                     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_start = j.value("lr_start", d.lr_start);
  c.lr_peak = j.value("lr_peak", d.lr_peak);
  c.lr_end = j.value("lr_end", d.lr_end);
  c.warmup_epochs = j.value("warmup_epochs", d.warmup_epochs);
  c.decay_epochs = j.value("decay_epochs", d.decay_epochs);
  c.truncate_min_s = j.value("truncate_min_s", d.truncate_min_s);
  c.truncate_max_s = j.value("truncate_max_s", d.truncate_max_s);
  c.seed = j.value("seed", d.seed);
  c.threads = j.value("threads", d.threads);
}

double lr_at(double epoch, const TrainConfig& tc) {
  const double e = std::clamp(epoch, 0.0, static_cast<double>(tc.epochs));
  if (e == 0.0) return tc.lr_start;
  if (e < tc.warmup_epochs) return tc.lr_start + (tc.lr_peak - tc.lr_start) * (e / tc.warmup_epochs);
  if (e == tc.warmup_epochs) return tc.lr_peak;
  if (e >= tc.warmup_epochs + tc.decay_epochs) return tc.lr_end;
  const double frac = (e - tc.warmup_epochs) / tc.decay_epochs;
  return tc.lr_peak * std::pow(tc.lr_end / tc.lr_peak, frac);
}

std::vector<AudioClip> random_truncate(const std::vector<AudioClip>& batch, std::mt19937_64& rng,
                                       const TrainConfig& tc) {
  if (batch.empty()) return {};
  std::size_t shortest = batch.front().size();
  for (const auto& c : batch) shortest = std::min(shortest, c.size());
  const int sr = batch.front().sample_rate;

  std::uniform_real_distribution<double> dur(tc.truncate_min_s, tc.truncate_max_s);
  const double seconds = tc.truncate_min_s == tc.truncate_max_s ? tc.truncate_min_s : dur(rng);
  const auto n = std::min(shortest, static_cast<std::size_t>(std::llround(seconds * sr)));

  std::vector<AudioClip> out;
  out.reserve(batch.size());
  for (const auto& clip : batch) {
    std::uniform_int_distribution<std::size_t> off(0, clip.size() - n);
    const std::size_t start = off(rng);
    AudioClip crop;
    crop.sample_rate = clip.sample_rate;
    crop.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        clip.samples.begin() + static_cast<std::ptrdiff_t>(start + n));
    out.push_back(std::move(crop));
  }
  return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, int threads, std::uint64_t seed)
    : model_(model), threads_(threads), rng_(seed), m_(model.params().zero_gradients()), v_(m_) {}

double Trainer::step(const std::vector<AudioClip>& clips, const std::vector<float>& targets, double lr,
                     bool use_layerdrop) {
  if (clips.size() != targets.size() || clips.empty()) throw InvalidInput("trainer: clips/targets mismatch");
  const auto& cfg = model_.config();

  std::vector<bool> dropped(static_cast<std::size_t>(cfg.n_layers), false);
  if (use_layerdrop && cfg.layerdrop > 0.0) {
    std::bernoulli_distribution drop(cfg.layerdrop);
    for (std::size_t l = 0; l < dropped.size(); ++l) dropped[l] = drop(rng_);
  }

  const std::size_t n = clips.size();
  const std::size_t chunks = std::min(n, kGradientChunks);
  std::vector<Gradients> partial(chunks);
  std::vector<double> errors(n);
  run_chunks(chunks, threads_, [&](std::size_t c) {
    partial[c] = model_.params().zero_gradients();
    auto [lo, hi] = chunk_range(n, chunks, c);
    ForwardCache cache;
    for (std::size_t i = lo; i < hi; ++i) {
      const float pred = model_.forward(clips[i].samples, &cache, &dropped);
      const double err = static_cast<double>(pred) - targets[i];
      errors[i] = err * err;
      model_.backward(cache, static_cast<float>(2.0 * err / static_cast<double>(n)), partial[c]);
    }
  });
  const double loss = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(n);
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "non-finite training loss at step " << t_ + 1 << " (lr " << lr << ", batch of " << n << ")";
    throw TrainingDiverged(os.str());
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(epsilon);
  auto& ps = model_.params();
  for (std::size_t p = 0; p < ps.size(); ++p) {
    Matrix& g = partial[0][p];
    for (std::size_t c = 1; c < chunks; ++c) g += partial[c][p];
    m_[p] = b1 * m_[p] + (1.0F - b1) * g;
    v_[p] = b2 * v_[p] + (1.0F - b2) * g.cwiseProduct(g);
    ps[p].value.array() -= step_size * m_[p].array() / ((v_[p].array() * inv_bc2).sqrt() + eps);
  }
  return loss;
}

double Trainer::evaluate(const std::vector<AudioClip>& clips, const std::vector<float>& targets) const {
  if (clips.size() != targets.size()) throw InvalidInput("trainer: clips/targets mismatch");
  if (clips.empty()) return 0.0;
  const std::size_t n = clips.size();
  std::vector<double> errors(n);
  const std::size_t chunks = std::min(n, kGradientChunks);
  run_chunks(chunks, threads_, [&](std::size_t c) {
    auto [lo, hi] = chunk_range(n, chunks, c);
    for (std::size_t i = lo; i < hi; ++i) {
      const double err = static_cast<double>(model_.forward(clips[i].samples, nullptr)) - targets[i];
      errors[i] = err * err;
    }
  });
  return std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

Checkpoint train(const std::vector<TrainExample>& train_set, const std::vector<TrainExample>& val_set,
                 const ModelConfig& mc, const TrainConfig& tc, double scale, const EpochCallback& on_epoch) {
  tc.validate();
  if (train_set.empty()) throw InvalidInput("train: empty training set");
  if (val_set.empty()) throw InvalidInput("train: empty validation set");
  const std::string& provider = train_set.front().provider_id;
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& ex : *set) {
      if (ex.provider_id != provider) {
        throw InvalidInput("train: targets from mixed embedding providers ('" + provider + "' and '" +
                           ex.provider_id + "', example " + ex.id + ")");
      }
      if (!std::isfinite(ex.target)) throw InvalidInput("train: non-finite target for " + ex.id);
    }
  }

  auto model = std::make_shared<Model>(mc);
  model->init(tc.seed);
  Trainer trainer(*model, tc.threads, tc.seed ^ 0x6a09e667f3bcc909ULL);
  std::mt19937_64 rng(tc.seed ^ 0xbb67ae8584caa73bULL);

  std::vector<AudioClip> val_clips;
  std::vector<float> val_targets;
  for (const auto& ex : val_set) {
    model->check_duration(ex.clip);
    val_clips.push_back(ex.clip);
    val_targets.push_back(ex.target);
  }
  for (const auto& ex : train_set) model->check_duration(ex.clip);

  const std::size_t n = train_set.size();
  const auto batch = static_cast<std::size_t>(tc.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  Checkpoint best;
  best.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_weights;
  std::vector<EpochRecord> log;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double lr = tc.lr_start;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * batch, hi = std::min(n, lo + batch);
      std::vector<AudioClip> clips;
      std::vector<float> targets;
      for (std::size_t i = lo; i < hi; ++i) {
        clips.push_back(train_set[order[i]].clip);
        targets.push_back(train_set[order[i]].target);
      }
      clips = random_truncate(clips, rng, tc);
      lr = lr_at(epoch + static_cast<double>(s) / static_cast<double>(steps_per_epoch), tc);
      loss_sum += trainer.step(clips, targets, lr) * static_cast<double>(hi - lo);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = trainer.evaluate(val_clips, val_targets);
    rec.lr = lr;
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingDiverged("non-finite validation loss after epoch " + std::to_string(epoch));
    }
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < best.best_val_loss) {
      best.best_val_loss = rec.val_loss;
      best.epoch_of_best = epoch;
      best_weights.clear();
      for (std::size_t p = 0; p < model->params().size(); ++p) best_weights.push_back(model->params()[p].value);
    }
  }

  for (std::size_t p = 0; p < best_weights.size(); ++p) model->params()[p].value = std::move(best_weights[p]);
  best.model = std::move(model);
  best.provider_id = provider;
  best.scale = scale;
  best.log = std::move(log);
  best.train_config = tc;
  return best;
}

}  // namespace dsq::nn
