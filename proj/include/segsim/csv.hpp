#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace segsim::csv {

// RFC 4180 subset: comma separator, double-quote quoting with "" escapes,
// LF or CRLF line endings. A leading UTF-8 BOM is skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based physical line number at which each row starts.
  std::vector<std::size_t> line_numbers;
};

Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

std::string escape_field(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace segsim::csv
