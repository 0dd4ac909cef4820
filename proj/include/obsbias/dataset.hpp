#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "obsbias/error.hpp"

namespace obsbias {

/// Rectangular numeric data: named columns of equal length. Categorical
/// text inputs are expanded to 0/1 indicator columns at ingestion.
struct Dataset {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t n_rows() const {
    return columns.empty() ? 0 : columns.front().size();
  }
  std::size_t n_cols() const { return names.size(); }

  bool has_column(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }

  std::size_t column_index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      throw schema_error("dataset has no column '" + name + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
  }

  const std::vector<double>& column(const std::string& name) const {
    return columns[column_index(name)];
  }

  void validate() const {
    if (names.size() != columns.size()) {
      throw schema_error("dataset names and columns disagree");
    }
    const std::size_t n = n_rows();
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j].size() != n) {
        throw schema_error("dataset is not rectangular: column '" +
                           names[j] + "' has " +
                           std::to_string(columns[j].size()) + " rows");
      }
    }
  }
};

inline bool is_binary_column(const std::vector<double>& col) {
  for (double v : col) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

/// Per-column missing counts produced by complete-case filtering.
struct MissingReport {
  std::vector<std::pair<std::string, std::size_t>> missing_by_column;
  std::size_t rows_dropped = 0;
  std::size_t rows_kept = 0;
};

/// Drop every row with a missing value in any of the listed columns.
/// Columns outside the list do not trigger drops but are filtered along.
inline Dataset complete_cases(const Dataset& data,
                              const std::vector<std::string>& used,
                              MissingReport* report = nullptr) {
  data.validate();
  std::vector<std::size_t> used_idx;
  used_idx.reserve(used.size());
  for (const auto& name : used) {
    used_idx.push_back(data.column_index(name));
  }
  const std::size_t n = data.n_rows();
  std::vector<char> keep(n, 1);
  std::vector<std::size_t> miss_count(used_idx.size(), 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < used_idx.size(); ++k) {
      if (std::isnan(data.columns[used_idx[k]][r])) {
        keep[r] = 0;
        ++miss_count[k];
      }
    }
  }
  Dataset out;
  out.names = data.names;
  out.columns.resize(data.columns.size());
  for (std::size_t j = 0; j < data.columns.size(); ++j) {
    auto& col = out.columns[j];
    col.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (keep[r]) col.push_back(data.columns[j][r]);
    }
  }
  if (report != nullptr) {
    report->missing_by_column.clear();
    for (std::size_t k = 0; k < used.size(); ++k) {
      if (miss_count[k] > 0) {
        report->missing_by_column.emplace_back(used[k], miss_count[k]);
      }
    }
    report->rows_kept = out.n_rows();
    report->rows_dropped = n - out.n_rows();
  }
  return out;
}

}  // namespace obsbias
