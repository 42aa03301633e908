#include "csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "hdsurv/errors.hpp"

namespace hdsurv::csv {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line, const std::string& source,
                                    std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(std::move(field)));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError(source, line_no, "unterminated quoted field");
  fields.push_back(trim(std::move(field)));
  return fields;
}

}  // namespace

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  Table table;
  table.source = path.string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_line(line, table.source, line_no);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ParseError(table.source, line_no,
                       "expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(line_no);
  }
  if (table.header.empty()) throw ParseError(table.source, line_no, "missing header row");
  return table;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "NaN"; }

double parse_cell(const std::string& cell, const Table& table, std::size_t line) {
  if (is_missing(cell)) return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    throw ParseError(table.source, line, "not a number: '" + cell + "'");
  }
  return value;
}

}  // namespace hdsurv::csv
