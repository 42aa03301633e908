#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hdsurv::csv {

struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based file line of each row, for error messages.
  std::vector<std::size_t> lines;
};

/// Comma-separated, header required, optional double quotes around fields.
/// Throws ParseError on unreadable files, ragged rows or unbalanced quotes.
Table read(const std::filesystem::path& path);

/// Parses a number in "." decimal notation; empty and "NA" cells are missing.
/// Throws ParseError with the given line for anything else that is not numeric.
double parse_cell(const std::string& cell, const Table& table, std::size_t line);

bool is_missing(const std::string& cell);

}  // namespace hdsurv::csv
