#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace headprune::io {

/// One row of a tabular input file, keyed by column name. Values are kept as text;
/// JSON scalars and arrays are stored in their serialized form.
struct Record {
  std::size_t line = 0;
  std::map<std::string, std::string, std::less<>> fields;

  const std::string& at(std::string_view key, std::string_view source) const;
  double number(std::string_view key, std::string_view source) const;
  long long integer(std::string_view key, std::string_view source) const;
};

std::string read_file(const std::filesystem::path& path);

/// Reads JSON-lines (first non-blank character '{') or delimited text whose first
/// non-comment line is a header. Blank lines and lines starting with '#' are skipped.
std::vector<Record> read_records(const std::filesystem::path& path);
std::vector<Record> parse_records(std::string_view content, std::string_view source);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

} // namespace headprune::io
