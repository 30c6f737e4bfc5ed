#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dsq::pipeline {

using Record = nlohmann::json;

/// One JSON object per line. Throws InvalidInput on malformed lines (with line number).
std::vector<Record> read_jsonl(const std::filesystem::path& path);
/// Writes atomically via a temporary file.
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records);
/// Sorts by the string field `key`; throws on duplicates.
void sort_by_id(std::vector<Record>& records, const std::string& key);

/// Lowercase hex FNV-1a of the file contents.
std::string file_hash(const std::filesystem::path& path);

/// Filesystem-safe form of an id (path separators and reserved characters replaced).
std::string id_to_filename(const std::string& id);

}  // namespace dsq::pipeline
