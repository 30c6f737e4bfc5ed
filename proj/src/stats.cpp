#include "dsq/stats.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dsq/error.hpp"

namespace dsq {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

TestResult degenerate_result(std::size_t n) {
  TestResult r;
  r.statistic = kNaN;
  r.p_value = kNaN;
  r.n = n;
  r.degenerate = true;
  return r;
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

// Sum over tie groups of (t^3 - t).
double tie_term(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double term = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const double t = static_cast<double>(j - i);
    term += t * t * t - t;
    i = j;
  }
  return term;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j + 1);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

TestResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("spearman: lengths differ");
  if (x.size() < 3) throw InvalidInput("spearman: need at least 3 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double r = pearson(rx, ry);
  if (std::isnan(r)) return degenerate_result(x.size());
  TestResult out;
  out.statistic = r;
  out.n = x.size();
  const double dof = static_cast<double>(x.size()) - 2.0;
  if (std::abs(r) >= 1.0 - 1e-15) {
    out.p_value = 0.0;
  } else {
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    const boost::math::students_t dist(dof);
    out.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
  }
  return out;
}

double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw InvalidInput("mae: lengths differ");
  if (pred.empty()) throw InvalidInput("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

TestResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw InvalidInput("wilcoxon_rank_sum: both samples must be nonempty");
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks = average_ranks(pooled);
  const double w = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(x.size()), 0.0);

  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  const double n = n1 + n2;
  const double mean = n1 * (n + 1.0) / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term(pooled) / (n * (n - 1.0)));

  TestResult out;
  out.statistic = w;
  out.n = pooled.size();
  if (var <= 0.0) {
    out.p_value = 1.0;
    out.degenerate = true;
    return out;
  }
  const double diff = w - mean;
  const double corrected = std::max(0.0, std::abs(diff) - 0.5);
  out.p_value = std::min(1.0, normal_two_sided(corrected / std::sqrt(var)));
  return out;
}

double wilcoxon_rank_sum_exact_p(std::span<const double> x, std::span<const double> y) {
  const std::size_t n1 = x.size();
  const std::size_t n = x.size() + y.size();
  if (n1 == 0 || y.empty()) throw InvalidInput("wilcoxon_rank_sum_exact_p: empty sample");
  if (n > 20) throw InvalidInput("wilcoxon_rank_sum_exact_p: limited to 20 pooled observations");
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks = average_ranks(pooled);
  const double observed = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n1), 0.0);
  const double mean = static_cast<double>(n1) * (static_cast<double>(n) + 1.0) / 2.0;
  const double dev = std::abs(observed - mean);

  std::size_t extreme = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1U << i)) w += ranks[i];
    }
    ++total;
    if (std::abs(w - mean) >= dev - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw InvalidInput("kruskal_wallis: need at least two groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) throw InvalidInput("kruskal_wallis: empty group");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const double n = static_cast<double>(pooled.size());
  const double correction = 1.0 - tie_term(pooled) / (n * n * n - n);
  if (correction <= 0.0) return degenerate_result(pooled.size());

  const auto ranks = average_ranks(pooled);
  double sum = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double r = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) r += ranks[offset + i];
    sum += r * r / static_cast<double>(g.size());
    offset += g.size();
  }
  const double h = (12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction;

  TestResult out;
  out.statistic = h;
  out.n = pooled.size();
  const boost::math::chi_squared dist(static_cast<double>(groups.size() - 1));
  out.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, std::max(0.0, h))), 0.0, 1.0);
  return out;
}

std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m) {
  if (m < p_values.size()) throw InvalidInput("bonferroni: m smaller than the number of tests");
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(std::min(1.0, static_cast<double>(m) * p));
  return out;
}

}  // namespace dsq
