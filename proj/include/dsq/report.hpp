#pragma once

#include <string>
#include <vector>

#include "dsq/stats.hpp"

namespace dsq {

/// One column of a metric panel. NaN marks a missing value.
struct MetricColumn {
  std::string name;
  std::vector<double> values;
  bool requires_reference = false;  ///< rendered with a trailing '*'
  bool ingested = false;            ///< provenance: external column rather than computed here
};

struct CorrelationCell {
  std::string col_a;
  std::string col_b;
  double r_s = 0.0;
  double p = 1.0;
  double corrected_p = 1.0;
  std::size_t n = 0;
  bool defined = false;
};

/// Symmetric pairwise Spearman matrix with Bonferroni-corrected p-values.
/// Cells with fewer than three complete rows are left undefined.
struct CorrelationReport {
  std::vector<std::string> columns;
  std::vector<bool> requires_reference;
  std::vector<std::vector<CorrelationCell>> cells;  ///< k x k, includes the unit diagonal
  std::size_t tests = 0;                            ///< Bonferroni m (off-diagonal pairs tested)

  /// Delimited matrix of r_s (two decimals; blank when undefined).
  std::string render_table(char delimiter = ',') const;
  /// One JSON object per upper-triangle pair {col_a, col_b, r_s, p, corrected_p, n}.
  std::string render_records() const;
};

CorrelationReport correlation_matrix(const std::vector<MetricColumn>& columns);

}  // namespace dsq
