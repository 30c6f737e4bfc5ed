#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsq/embed.hpp"

namespace dsq {

/// File-backed map segment_id -> float32 vector.
///
/// Layout (little-endian):
///   header:  8-byte magic "DSQEMB01", u32 version (=1), u32 dim, u64 count,
///            u32 provider byte length + provider_id UTF-8 bytes
///   records: u16 id byte length, id bytes, dim x float32
class EmbeddingStore {
 public:
  static constexpr char kMagic[9] = "DSQEMB01";
  static constexpr std::uint32_t kVersion = 1;

  EmbeddingStore() = default;
  EmbeddingStore(std::string provider_id, std::uint32_t dim) : provider_id_(std::move(provider_id)), dim_(dim) {}

  const std::string& provider_id() const { return provider_id_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  /// Throws InvalidInput on dim mismatch or duplicate id.
  void add(const std::string& id, std::vector<float> vector);
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  Embedding get(const std::string& id) const;
  /// Ids in insertion order.
  const std::vector<std::string>& ids() const { return order_; }

  void write(const std::filesystem::path& path) const;
  /// Rejects bad magic/version, truncated records, duplicate ids.
  static EmbeddingStore read(const std::filesystem::path& path);

 private:
  std::string provider_id_;
  std::uint32_t dim_ = 0;
  std::map<std::string, std::vector<float>> entries_;
  std::vector<std::string> order_;
};

}  // namespace dsq
