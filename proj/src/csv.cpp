#include "incast/csv.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace incast {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, header row required");
  for (auto& h : split_line(line)) table.header.push_back(trim(h));
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    for (auto& c : cells) c = trim(c);
    if (cells.size() != table.header.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " +
                               std::to_string(table.header.size()) +
                               " fields, got " + std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

bool is_missing_cell(const std::string& cell) {
  return cell.empty() || cell == "NA";
}

std::optional<double> parse_cell(const std::string& cell,
                                 const std::string& context) {
  if (is_missing_cell(cell)) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0')
    throw std::runtime_error(context + ": not a number: '" + cell + "'");
  return v;
}

}  // namespace incast
