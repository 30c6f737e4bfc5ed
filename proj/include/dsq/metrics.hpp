#pragma once

#include <span>
#include <string>
#include <vector>

namespace dsq {

inline constexpr double kSiSdrCapDb = 100.0;

/// Scale-invariant SDR in dB, capped at +100 dB when the residual vanishes.
double si_sdr(std::span<const float> estimate, std::span<const float> reference);

/// Levenshtein distance with unit costs.
template <typename T>
std::size_t edit_distance(std::span<const T> reference, std::span<const T> hypothesis) {
  std::vector<std::size_t> prev(hypothesis.size() + 1), cur(hypothesis.size() + 1);
  for (std::size_t j = 0; j <= hypothesis.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= reference.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hypothesis.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hypothesis.size()];
}

/// edit_distance / |reference|. Throws InvalidInput on an empty reference.
double edit_rate(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// Lowercase, strip punctuation, collapse whitespace.
std::string normalize_transcript(const std::string& text);
/// Whitespace tokens of the normalized text.
std::vector<std::string> word_tokens(const std::string& text);
/// UTF-8 code points of the normalized text, spaces excluded.
std::vector<std::string> char_tokens(const std::string& text);

double word_error_rate(const std::string& reference, const std::string& hypothesis);
double char_error_rate(const std::string& reference, const std::string& hypothesis);

}  // namespace dsq
