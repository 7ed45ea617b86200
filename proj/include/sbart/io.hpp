#pragma once

#include <string>
#include <vector>

#include "sbart/types.hpp"

namespace sbart {

/// Doubles are serialized with "%.17g" so write -> read round-trips are
/// bit-exact.
std::string format_double(double v);

/// Write a dense matrix as comma-delimited text, one row per line. Lines in
/// header_comments are emitted first, each prefixed with "# ".
void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& header_comments = {});

/// Read a matrix written by write_matrix_csv (lines starting with '#' are
/// skipped). Throws IoError on unreadable files and ValidationError naming
/// the offending line on malformed content.
Matrix read_matrix_csv(const std::string& path);

struct DataCsv {
  Matrix y;            // NaN at missing cells
  BoolArray observed;
  bool had_header = false;
  std::vector<std::string> columns;
};

/// Read a data table: comma-delimited, optional single header line, empty
/// fields or "NA"/"na"/"NaN" mark missing cells.
DataCsv read_data_csv(const std::string& path);

/// Read a 0/1 symmetric pattern matrix. Errors name the offending line.
SparsityPattern read_pattern_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace sbart
