#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "obsbias/dataset.hpp"
#include "obsbias/error.hpp"
#include "obsbias/sha256.hpp"

namespace obsbias {

namespace detail {

/// Split RFC 4180 text into records of fields. Quoted fields may contain
/// commas, doubled quotes, and line breaks. Accepts LF or CRLF endings.
inline std::vector<std::vector<std::string>> csv_records(
    std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;

  const auto end_field = [&]() {
    record.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  const auto end_record = [&]() {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw parse_error("line " + std::to_string(line) +
                            ": stray quote inside unquoted field");
        }
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;  // CRLF
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw parse_error("unterminated quoted field at end of input");
  }
  if (!field.empty() || !record.empty() || field_was_quoted) {
    end_record();
  }
  return records;
}

inline bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;  // from_chars rejects an explicit plus
  const auto res = std::from_chars(first, last, *out);
  return res.ec == std::errc{} && res.ptr == last;
}

inline bool is_missing_cell(const std::string& s) {
  return s.empty() || s == "NA";
}

inline void quote_csv_field(const std::string& s, std::string& out) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) {
    out += s;
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";  // missing marker on round trip
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Parse CSV text into a Dataset. Columns where every non-missing cell
/// reads as a number become numeric ("" and "NA" become NaN); columns
/// where none does are categorical and are expanded into indicator
/// columns named `col=level`, dropping the alphabetically first level.
/// A column mixing numeric and non-numeric cells is an error.
inline Dataset parse_csv(std::string_view text) {
  const auto records = detail::csv_records(text);
  if (records.empty()) {
    throw parse_error("empty input: expected a header row");
  }
  const auto& header = records.front();
  {
    std::set<std::string> seen;
    for (const auto& name : header) {
      if (!seen.insert(name).second) {
        throw parse_error("duplicate header '" + name + "'");
      }
    }
  }
  const std::size_t n_cols = header.size();
  const std::size_t n_rows = records.size() - 1;
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (records[r + 1].size() != n_cols) {
      throw parse_error("row " + std::to_string(r + 2) + " has " +
                        std::to_string(records[r + 1].size()) +
                        " fields, expected " + std::to_string(n_cols));
    }
  }

  Dataset out;
  for (std::size_t j = 0; j < n_cols; ++j) {
    std::size_t numeric = 0, text_cells = 0, first_bad_row = 0;
    std::string first_bad_cell;
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto& cell = records[r + 1][j];
      if (detail::is_missing_cell(cell)) continue;
      double v;
      if (detail::parse_double(cell, &v)) {
        ++numeric;
      } else {
        if (text_cells == 0) {
          first_bad_row = r + 2;
          first_bad_cell = cell;
        }
        ++text_cells;
      }
    }
    if (numeric > 0 && text_cells > 0) {
      throw parse_error("row " + std::to_string(first_bad_row) +
                        ", column '" + header[j] + "': cannot parse '" +
                        first_bad_cell + "' as a number");
    }
    if (text_cells == 0) {
      // Numeric column (possibly all missing).
      std::vector<double> col(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& cell = records[r + 1][j];
        if (detail::is_missing_cell(cell)) {
          col[r] = std::numeric_limits<double>::quiet_NaN();
        } else {
          detail::parse_double(cell, &col[r]);
        }
      }
      out.names.push_back(header[j]);
      out.columns.push_back(std::move(col));
    } else {
      // Categorical column: sorted distinct levels, first level dropped.
      std::set<std::string> levels;
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& cell = records[r + 1][j];
        if (!detail::is_missing_cell(cell)) levels.insert(cell);
      }
      auto it = levels.begin();
      ++it;  // drop the alphabetically first level
      for (; it != levels.end(); ++it) {
        std::vector<double> col(n_rows);
        for (std::size_t r = 0; r < n_rows; ++r) {
          const auto& cell = records[r + 1][j];
          col[r] = detail::is_missing_cell(cell)
                       ? std::numeric_limits<double>::quiet_NaN()
                       : (cell == *it ? 1.0 : 0.0);
        }
        out.names.push_back(header[j] + "=" + *it);
        out.columns.push_back(std::move(col));
      }
    }
  }
  {
    std::set<std::string> seen;
    for (const auto& name : out.names) {
      if (!seen.insert(name).second) {
        throw parse_error("indicator expansion collides with existing "
                          "column '" + name + "'");
      }
    }
  }
  out.validate();
  return out;
}

/// Read a CSV file; optionally reports the SHA-256 of the raw bytes.
inline Dataset read_csv(const std::filesystem::path& path,
                        std::string* sha256 = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (sha256 != nullptr) {
    *sha256 = sha256_hex(text);
  }
  try {
    return parse_csv(text);
  } catch (const parse_error& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
}

/// Canonical CSV emission: round-trip exact numbers via shortest-exact
/// formatting, NaN as the empty missing marker, LF line endings.
inline std::string to_csv(const Dataset& data) {
  data.validate();
  std::string out;
  for (std::size_t j = 0; j < data.names.size(); ++j) {
    if (j > 0) out.push_back(',');
    detail::quote_csv_field(data.names[j], out);
  }
  out.push_back('\n');
  const std::size_t n = data.n_rows();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < data.columns.size(); ++j) {
      if (j > 0) out.push_back(',');
      out += detail::format_double(data.columns[j][r]);
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_csv(const Dataset& data,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw io_error("cannot open '" + path.string() + "' for writing");
  }
  out << to_csv(data);
  if (!out) {
    throw io_error("write failed for '" + path.string() + "'");
  }
}

}  // namespace obsbias
