#include "dsq/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace dsq {

CorrelationReport correlation_matrix(const std::vector<MetricColumn>& columns) {
  CorrelationReport report;
  const std::size_t k = columns.size();
  for (const auto& c : columns) {
    report.columns.push_back(c.name);
    report.requires_reference.push_back(c.requires_reference);
  }
  report.cells.assign(k, std::vector<CorrelationCell>(k));

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      CorrelationCell cell;
      cell.col_a = columns[i].name;
      cell.col_b = columns[j].name;
      std::vector<double> x, y;
      const std::size_t rows = std::min(columns[i].values.size(), columns[j].values.size());
      for (std::size_t r = 0; r < rows; ++r) {
        const double a = columns[i].values[r];
        const double b = columns[j].values[r];
        if (std::isfinite(a) && std::isfinite(b)) {
          x.push_back(a);
          y.push_back(b);
        }
      }
      cell.n = x.size();
      if (i == j) {
        cell.defined = cell.n > 0;
        cell.r_s = 1.0;
        cell.p = 0.0;
        cell.corrected_p = 0.0;
      } else if (x.size() >= 3) {
        const TestResult t = spearman(x, y);
        if (!t.degenerate) {
          cell.defined = true;
          cell.r_s = t.statistic;
          cell.p = t.p_value;
          ++report.tests;
        }
      }
      report.cells[i][j] = cell;
    }
  }

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      auto& cell = report.cells[i][j];
      if (cell.defined) cell.corrected_p = std::min(1.0, static_cast<double>(report.tests) * cell.p);
      CorrelationCell mirror = cell;
      std::swap(mirror.col_a, mirror.col_b);
      report.cells[j][i] = mirror;
    }
  }
  return report;
}

std::string CorrelationReport::render_table(char delimiter) const {
  std::ostringstream out;
  auto label = [&](std::size_t i) { return columns[i] + (requires_reference[i] ? "*" : ""); };
  out << "metric";
  for (std::size_t i = 0; i < columns.size(); ++i) out << delimiter << label(i);
  out << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out << label(i);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      out << delimiter;
      if (cells[i][j].defined) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", cells[i][j].r_s);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string CorrelationReport::render_records() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    for (std::size_t j = i + 1; j < columns.size(); ++j) {
      const auto& c = cells[i][j];
      nlohmann::ordered_json rec;
      rec["col_a"] = c.col_a;
      rec["col_b"] = c.col_b;
      if (c.defined) {
        rec["r_s"] = c.r_s;
        rec["p"] = c.p;
        rec["corrected_p"] = c.corrected_p;
      } else {
        rec["r_s"] = nullptr;
        rec["p"] = nullptr;
        rec["corrected_p"] = nullptr;
      }
      rec["n"] = c.n;
      out << rec.dump() << '\n';
    }
  }
  return out.str();
}

}  // namespace dsq
