#pragma once

// CSV ingestion: comma separated, header row, '.' decimal point, optional
// double-quoted fields. Covariate columns that are entirely numeric pass
// through; any other column is one-hot encoded against a reference level.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "dggqr/errors.hpp"
#include "dggqr/model.hpp"

namespace dggqr {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// File line of each row (header is line 1).
  std::vector<std::size_t> line_numbers;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw LoadError(fmt::format("column '{}' not found in header", name));
    return static_cast<std::size_t>(it - header.begin());
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      out.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field += ch;
    }
  }
  if (quoted) throw LoadError(fmt::format("line {}: unterminated quoted field", line_no));
  out.push_back(was_quoted ? field : trim(field));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return v;
}

} // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(fmt::format("cannot open '{}'", path));
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (!have_header) {
      if (line.empty()) throw LoadError(fmt::format("'{}': missing header row", path));
      table.header = detail::split_csv_line(line, line_no);
      std::set<std::string> seen;
      for (const auto& h : table.header) {
        if (h.empty()) throw LoadError(fmt::format("'{}': empty column name in header", path));
        if (!seen.insert(h).second) throw LoadError(fmt::format("'{}': duplicate column name '{}'", path, h));
      }
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() != table.header.size()) {
      throw LoadError(fmt::format("'{}' row {}: expected {} fields, found {}", path, line_no, table.header.size(),
                                  fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw LoadError(fmt::format("'{}': file is empty", path));
  return table;
}

/// Meaning of one design column.
struct CoefficientInfo {
  std::string name;
  std::string variable;
  /// Non-reference level for a dummy column; empty otherwise.
  std::string level;
  bool categorical = false;
};

struct CategoricalVariable {
  std::string variable;
  std::string reference;
  /// All levels, sorted; the reference is included.
  std::vector<std::string> levels;
};

/// Maps coefficient index to (variable, level); index 0 is the intercept.
struct EncodingReport {
  std::vector<CoefficientInfo> coefficients;
  std::vector<CategoricalVariable> categorical;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : coefficients) out.push_back(c.name);
    return out;
  }

  /// Covariate values behind a design row: the active level for each
  /// categorical variable, the number itself for numeric ones.
  std::map<std::string, std::string> decode(const Eigen::Ref<const Eigen::VectorXd>& row) const {
    std::map<std::string, std::string> out;
    for (const auto& cat : categorical) out[cat.variable] = cat.reference;
    for (std::size_t j = 1; j < coefficients.size(); ++j) {
      const auto& c = coefficients[j];
      const double v = row(static_cast<Eigen::Index>(j));
      if (c.categorical) {
        if (v == 1.0) out[c.variable] = c.level;
      } else {
        out[c.variable] = fmt::format("{}", v);
      }
    }
    return out;
  }

  /// Human-readable pattern label, e.g. "age=55-65;stage=II".
  std::string label(const Eigen::Ref<const Eigen::VectorXd>& row) const {
    std::string out;
    for (const auto& [var, value] : decode(row)) {
      if (!out.empty()) out += ';';
      out += var + '=' + value;
    }
    return out.empty() ? std::string("(Intercept)") : out;
  }
};

/// Design with an intercept and covariates named by `names` columns, one-hot
/// encoding every non-numeric covariate. The reference level defaults to
/// the lexicographically first; `references` overrides it per variable.
inline std::pair<Eigen::MatrixXd, EncodingReport> encode_covariates(
    const CsvTable& table, const std::vector<std::string>& names,
    const std::map<std::string, std::string>& references = {}) {
  EncodingReport report;
  report.coefficients.push_back({"(Intercept)", "(Intercept)", "", false});
  std::vector<std::vector<double>> columns;
  const std::size_t n = table.rows.size();

  std::set<std::string> requested;
  for (const auto& name : names) {
    if (!requested.insert(name).second) throw LoadError(fmt::format("covariate '{}' listed twice", name));
    const std::size_t col = table.column(name);
    std::vector<double> numeric(n);
    bool is_numeric = true;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cell = table.rows[i][col];
      if (cell.empty()) {
        throw LoadError(fmt::format("row {}: missing value in column '{}'", table.line_numbers[i], name));
      }
      if (is_numeric) {
        if (auto v = detail::parse_double(cell)) {
          numeric[i] = *v;
        } else {
          is_numeric = false;
        }
      }
    }
    if (is_numeric) {
      report.coefficients.push_back({name, name, "", false});
      columns.push_back(std::move(numeric));
      continue;
    }
    std::set<std::string> level_set;
    for (const auto& row : table.rows) level_set.insert(row[col]);
    CategoricalVariable cat{name, *level_set.begin(), {level_set.begin(), level_set.end()}};
    if (auto it = references.find(name); it != references.end()) {
      if (!level_set.contains(it->second)) {
        throw LoadError(fmt::format("reference level '{}' does not occur in column '{}'", it->second, name));
      }
      cat.reference = it->second;
    }
    for (const auto& level : cat.levels) {
      if (level == cat.reference) continue;
      std::vector<double> dummy(n);
      for (std::size_t i = 0; i < n; ++i) dummy[i] = table.rows[i][col] == level ? 1.0 : 0.0;
      report.coefficients.push_back({name + "=" + level, name, level, true});
      columns.push_back(std::move(dummy));
    }
    report.categorical.push_back(std::move(cat));
  }
  for (const auto& [var, level] : references) {
    if (!requested.contains(var)) throw LoadError(fmt::format("reference given for unknown covariate '{}'", var));
  }

  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size() + 1));
  design.col(0).setOnes();
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = columns[j][i];
    }
  }
  return {std::move(design), std::move(report)};
}

struct LoadedData {
  SurvivalDataset dataset;
  EncodingReport encoding;
};

inline LoadedData load_csv(const std::string& path, const std::string& time_column, const std::string& status_column,
                           const std::vector<std::string>& covariates,
                           const std::map<std::string, std::string>& references = {}) {
  const CsvTable table = read_csv(path);
  if (table.rows.empty()) throw LoadError(fmt::format("'{}': no data rows", path));
  const std::size_t tcol = table.column(time_column);
  const std::size_t scol = table.column(status_column);
  std::vector<double> times;
  std::vector<int> status;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = table.line_numbers[i];
    if (row[tcol].empty() || row[scol].empty()) throw LoadError(fmt::format("row {}: missing time or status", line));
    const auto t = detail::parse_double(row[tcol]);
    if (!t || !(*t > 0.0) || !std::isfinite(*t)) {
      throw LoadError(fmt::format("row {}: time must be a positive number, got '{}'", line, row[tcol]));
    }
    const auto s = detail::parse_double(row[scol]);
    if (!s || (*s != 0.0 && *s != 1.0)) {
      throw LoadError(fmt::format("row {}: status must be 0 or 1, got '{}'", line, row[scol]));
    }
    times.push_back(*t);
    status.push_back(static_cast<int>(*s));
  }
  auto [design, report] = encode_covariates(table, covariates, references);
  try {
    return {SurvivalDataset(std::move(times), std::move(status), std::move(design)), std::move(report)};
  } catch (const DomainError& e) {
    throw LoadError(fmt::format("'{}': {}", path, e.what()));
  }
}

/// Escapes a field for CSV output.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

} // namespace dggqr
