#include "dsq/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dsq/error.hpp"

namespace dsq::nn {
namespace {

constexpr char kMagic[8] = {'D', 'S', 'Q', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.lr}};
}

void from_json(const nlohmann::json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val_loss = j.at("val_loss").get<double>();
  r.lr = j.at("lr").get<double>();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (!ckpt.model) throw InvalidInput("checkpoint has no model");
  const ParameterSet& ps = ckpt.model->params();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& p = ps[i];
    tensors.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.value.size()) * sizeof(float);
  }
  const nlohmann::json header{{"format_version", kFormatVersion},
                              {"model_config", ckpt.model->config()},
                              {"train_config", ckpt.train_config},
                              {"provider_id", ckpt.provider_id},
                              {"scale", ckpt.scale},
                              {"best_val_loss", ckpt.best_val_loss},
                              {"epoch_of_best", ckpt.epoch_of_best},
                              {"log", ckpt.log},
                              {"tensors", tensors}};
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof size);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& v = ps[i].value;
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    if (!out) throw EnvironmentError("short write to checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InvalidInput("not a checkpoint: " + path.string());
  std::uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!in || size > (1ULL << 30)) throw InvalidInput("corrupt checkpoint header: " + path.string());
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw InvalidInput("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("corrupt checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format_version", 0) != kFormatVersion) throw InvalidInput("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.model = std::make_shared<Model>(header.at("model_config").get<ModelConfig>());
  ckpt.train_config = header.value("train_config", nlohmann::json::object());
  ckpt.provider_id = header.at("provider_id").get<std::string>();
  ckpt.scale = header.at("scale").get<double>();
  ckpt.best_val_loss = header.at("best_val_loss").get<double>();
  ckpt.epoch_of_best = header.at("epoch_of_best").get<int>();
  ckpt.log = header.at("log").get<std::vector<EpochRecord>>();

  const auto& tensors = header.at("tensors");
  ParameterSet& ps = ckpt.model->params();
  if (tensors.size() != ps.size()) throw InvalidInput("checkpoint tensor count does not match its config");
  const std::streamoff data_start = in.tellg();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& t = tensors[i];
    auto& p = ps[i];
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (t.at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.value.rows() ||
        shape[1] != p.value.cols()) {
      throw InvalidInput("checkpoint tensor " + t.at("name").get<std::string>() + " does not match the model");
    }
    in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!in) throw InvalidInput("truncated checkpoint data: " + path.string());
  }
  return ckpt;
}

std::vector<ScoreOutcome> score_batch(const Checkpoint& ckpt, const std::vector<AudioClip>& clips) {
  if (!ckpt.model) throw InvalidInput("checkpoint has no model");
  std::vector<ScoreOutcome> out(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    try {
      out[i].score = ckpt.model->score(clips[i]);
    } catch (const InvalidInput& e) {
      out[i].error = e.what();
    }
  }
  return out;
}

}  // namespace dsq::nn
