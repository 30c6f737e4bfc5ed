#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dsq {

/// Outcome of a significance test. `statistic` is r_s, W or H depending on the test.
/// `degenerate` marks undefined statistics (zero rank variance, full ties); the
/// numeric fields are NaN in that case.
struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::optional<double> corrected_p;
  bool degenerate = false;
};

/// Mid-ranks (1-based); ties receive the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with a two-sided Student-t p-value (n - 2 dof).
TestResult spearman(std::span<const double> x, std::span<const double> y);

double pearson(std::span<const double> x, std::span<const double> y);

/// Mean absolute error. Throws on empty or mismatched input.
double mae(std::span<const double> pred, std::span<const double> target);

/// Wilcoxon rank-sum: W = sum of ranks of `x` in the pooled sample. Two-sided p from
/// the normal approximation with tie correction and continuity correction.
TestResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y);

/// Two-sided exact permutation p-value of the rank-sum statistic (small samples only).
double wilcoxon_rank_sum_exact_p(std::span<const double> x, std::span<const double> y);

/// Kruskal-Wallis H with tie correction; p from chi-square with k - 1 dof.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// min(1, m * p) for each p.
std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m);

}  // namespace dsq
