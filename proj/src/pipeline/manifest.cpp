#include "dsq/pipeline/manifest.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include "dsq/error.hpp"
#include "dsq/recipe.hpp"

namespace dsq::pipeline {

std::vector<Record> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest " + path.string());
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(Record::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!records.back().is_object()) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
    }
  }
  return records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write " + tmp);
    for (const auto& r : records) out << r.dump() << '\n';
    if (!out) throw EnvironmentError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void sort_by_id(std::vector<Record>& records, const std::string& key) {
  std::sort(records.begin(), records.end(), [&](const Record& a, const Record& b) {
    return a.at(key).get_ref<const std::string&>() < b.at(key).get_ref<const std::string&>();
  });
  const auto dup = std::adjacent_find(records.begin(), records.end(),
                                      [&](const Record& a, const Record& b) { return a.at(key) == b.at(key); });
  if (dup != records.end()) throw InvalidInput("duplicate " + key + " " + dup->at(key).get<std::string>());
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::string id_to_filename(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (c == '/' || c == '\\' || c == ':' || c == '#' || c == ' ') c = '_';
  }
  return out;
}

}  // namespace dsq::pipeline
