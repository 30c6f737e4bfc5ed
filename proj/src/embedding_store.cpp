#include "dsq/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dsq/error.hpp"

namespace dsq {
namespace {

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T take() {
    T v;
    std::memcpy(&v, need(sizeof(T)), sizeof(T));
    return v;
  }
  const char* need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw InvalidInput("corrupt embedding store: truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void EmbeddingStore::add(const std::string& id, std::vector<float> vector) {
  if (vector.size() != dim_) {
    throw InvalidInput("embedding store: vector for '" + id + "' has dim " + std::to_string(vector.size()) +
                       ", expected " + std::to_string(dim_));
  }
  if (id.empty() || id.size() > 0xFFFF) throw InvalidInput("embedding store: invalid id length");
  if (entries_.count(id) != 0) throw InvalidInput("embedding store: duplicate id '" + id + "'");
  entries_.emplace(id, std::move(vector));
  order_.push_back(id);
}

Embedding EmbeddingStore::get(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw EnvironmentError("embedding store has no entry for '" + id + "'");
  return Embedding{it->second, provider_id_};
}

void EmbeddingStore::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EnvironmentError("cannot write embedding store " + path.string());
  out.write(kMagic, 8);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, dim_);
  put<std::uint64_t>(out, order_.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(provider_id_.size()));
  out.write(provider_id_.data(), static_cast<std::streamsize>(provider_id_.size()));
  for (const auto& id : order_) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    const auto& v = entries_.at(id);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw EnvironmentError("short write to embedding store " + path.string());
}

EmbeddingStore EmbeddingStore::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot open embedding store " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (std::memcmp(r.need(8), kMagic, 8) != 0) throw InvalidInput("corrupt embedding store: bad magic");
  if (r.take<std::uint32_t>() != kVersion) throw InvalidInput("corrupt embedding store: unsupported version");
  const auto dim = r.take<std::uint32_t>();
  const auto count = r.take<std::uint64_t>();
  const auto provider_len = r.take<std::uint32_t>();
  const char* provider = r.need(provider_len);
  EmbeddingStore store(std::string(provider, provider_len), dim);
  if (dim == 0) throw InvalidInput("corrupt embedding store: zero dimension");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id_len = r.take<std::uint16_t>();
    std::string id(r.need(id_len), id_len);
    std::vector<float> v(dim);
    std::memcpy(v.data(), r.need(dim * sizeof(float)), dim * sizeof(float));
    store.add(id, std::move(v));
  }
  if (!r.done()) throw InvalidInput("corrupt embedding store: trailing bytes (record length mismatch)");
  return store;
}

}  // namespace dsq
