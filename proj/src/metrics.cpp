#include "dsq/metrics.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "dsq/error.hpp"

namespace dsq {

double si_sdr(std::span<const float> estimate, std::span<const float> reference) {
  if (estimate.size() != reference.size()) throw InvalidInput("si_sdr: lengths differ");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += static_cast<double>(estimate[i]) * reference[i];
    ref_energy += static_cast<double>(reference[i]) * reference[i];
  }
  if (ref_energy == 0.0) throw InvalidInput("si_sdr: zero reference");
  const double alpha = dot / ref_energy;
  double target_energy = 0.0, residual_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = static_cast<double>(estimate[i]) - t;
    target_energy += t * t;
    residual_energy += e * e;
  }
  if (residual_energy <= target_energy * 1e-10) return kSiSdrCapDb;
  if (target_energy <= residual_energy * 1e-10) return -kSiSdrCapDb;
  return 10.0 * std::log10(target_energy / residual_energy);
}

double edit_rate(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw InvalidInput("edit_rate: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) / static_cast<double>(reference.size());
}

std::string normalize_transcript(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c < 0x80 && std::ispunct(c)) continue;
    if (c < 0x80 && std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  }
  return out;
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::istringstream in(normalize_transcript(text));
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<std::string> char_tokens(const std::string& text) {
  const std::string norm = normalize_transcript(text);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < norm.size();) {
    const auto lead = static_cast<unsigned char>(norm[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    if (norm[i] != ' ') out.push_back(norm.substr(i, len));
    i += len;
  }
  return out;
}

double word_error_rate(const std::string& reference, const std::string& hypothesis) {
  const auto r = word_tokens(reference);
  const auto h = word_tokens(hypothesis);
  return edit_rate(r, h);
}

double char_error_rate(const std::string& reference, const std::string& hypothesis) {
  const auto r = char_tokens(reference);
  const auto h = char_tokens(hypothesis);
  return edit_rate(r, h);
}

}  // namespace dsq
