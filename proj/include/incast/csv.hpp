#pragma once

#include <optional>
#include <string>
#include <vector>

namespace incast {

/// One parsed CSV table: header names plus rows of raw string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index for `name`, or -1 if absent.
  int column(const std::string& name) const;
};

/// Reads a comma-delimited UTF-8 file with a mandatory header row.
/// Trailing CR is stripped; cells are not unescaped (no quoting in the
/// flat files this tool consumes).
CsvTable read_csv(const std::string& path);

/// Empty cells and the literal "NA" are missing values.
bool is_missing_cell(const std::string& cell);

/// Parses a cell as double; throws std::runtime_error naming `context`
/// on garbage. Missing cells return nullopt.
std::optional<double> parse_cell(const std::string& cell,
                                 const std::string& context);

}  // namespace incast
