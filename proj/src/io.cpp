#include "sbart/io.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace sbart {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << contents;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& header_comments) {
  std::ostringstream out;
  for (const std::string& line : header_comments) out << "# " << line << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_double(const std::string& field, double* out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return false;
  *out = v;
  return true;
}

bool is_missing_token(const std::string& field) {
  const std::string t = trim(field);
  return t.empty() || t == "NA" || t == "na" || t == "NaN" || t == "nan";
}

/// Parsed rows of a delimited file, '#' comment lines skipped, with original
/// line numbers for error messages.
struct RawCsv {
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

RawCsv read_raw_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  RawCsv raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '#') continue;
    if (trim(line).empty()) continue;
    raw.rows.push_back(split_fields(line));
    raw.line_numbers.push_back(lineno);
  }
  return raw;
}

}  // namespace

Matrix read_matrix_csv(const std::string& path) {
  const RawCsv raw = read_raw_csv(path);
  if (raw.rows.empty()) throw ValidationError(path + ": no data rows");
  const std::size_t cols = raw.rows.front().size();
  Matrix m(raw.rows.size(), cols);
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    if (raw.rows[i].size() != cols)
      throw ValidationError(path + ": line " + std::to_string(raw.line_numbers[i]) +
                            ": expected " + std::to_string(cols) + " fields, got " +
                            std::to_string(raw.rows[i].size()));
    for (std::size_t j = 0; j < cols; ++j) {
      double v;
      if (!parse_double(raw.rows[i][j], &v))
        throw ValidationError(path + ": line " + std::to_string(raw.line_numbers[i]) +
                              ": cannot parse '" + raw.rows[i][j] + "' as a number");
      m(i, j) = v;
    }
  }
  return m;
}

DataCsv read_data_csv(const std::string& path) {
  const RawCsv raw = read_raw_csv(path);
  if (raw.rows.empty()) throw ValidationError(path + ": no data rows");

  // Header detection: a first line with any field that is neither numeric
  // nor a missing-value token.
  std::size_t first_row = 0;
  DataCsv out;
  for (const std::string& f : raw.rows[0]) {
    double v;
    if (!parse_double(f, &v) && !is_missing_token(f)) {
      out.had_header = true;
      break;
    }
  }
  if (out.had_header) {
    for (const std::string& f : raw.rows[0]) out.columns.push_back(trim(f));
    first_row = 1;
    if (raw.rows.size() == 1) throw ValidationError(path + ": header but no data rows");
  }

  const std::size_t n = raw.rows.size() - first_row;
  const std::size_t p = raw.rows[first_row].size();
  out.y = Matrix::Constant(n, p, std::numeric_limits<double>::quiet_NaN());
  out.observed = BoolArray::Constant(n, p, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = raw.rows[first_row + i];
    const int lineno = raw.line_numbers[first_row + i];
    if (row.size() != p)
      throw ValidationError(path + ": line " + std::to_string(lineno) +
                            ": expected " + std::to_string(p) + " fields, got " +
                            std::to_string(row.size()));
    for (std::size_t j = 0; j < p; ++j) {
      if (is_missing_token(row[j])) continue;
      double v;
      if (!parse_double(row[j], &v))
        throw ValidationError(path + ": line " + std::to_string(lineno) +
                              ": cannot parse '" + row[j] + "' as a number");
      out.y(i, j) = v;
      out.observed(i, j) = true;
    }
  }
  return out;
}

SparsityPattern read_pattern_csv(const std::string& path) {
  const RawCsv raw = read_raw_csv(path);
  if (raw.rows.empty()) throw ValidationError(path + ": no data rows");
  const std::size_t p = raw.rows.size();
  Matrix m(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const int lineno = raw.line_numbers[i];
    if (raw.rows[i].size() != p)
      throw ValidationError(path + ": line " + std::to_string(lineno) +
                            ": pattern matrix must be square (" + std::to_string(p) +
                            " columns expected, got " +
                            std::to_string(raw.rows[i].size()) + ")");
    for (std::size_t j = 0; j < p; ++j) {
      double v;
      if (!parse_double(raw.rows[i][j], &v) || (v != 0.0 && v != 1.0))
        throw ValidationError(path + ": line " + std::to_string(lineno) +
                              ": pattern entries must be 0 or 1, got '" +
                              raw.rows[i][j] + "'");
      m(i, j) = v;
    }
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (m(i, j) != m(j, i))
        throw ValidationError(path + ": line " + std::to_string(raw.line_numbers[i]) +
                              ": pattern matrix is not symmetric");
  for (std::size_t i = 0; i < p; ++i) m(i, i) = 1.0;
  return SparsityPattern::from_matrix(m);
}

}  // namespace sbart
