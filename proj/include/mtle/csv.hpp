#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mtle::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line where the row starts
};

// Parses delimiter-separated content with RFC 4180 quoting: fields may be
// wrapped in double quotes, quotes are doubled inside quoted fields, and
// quoted fields may span lines. Accepts LF and CRLF line endings.
// Throws std::runtime_error naming the line on structural errors
// (unterminated quote, garbage after a closing quote).
std::vector<Row> parse(std::string_view content, char delimiter);

// Encodes one row, quoting any field that contains the delimiter, a
// double quote, CR, or LF.
std::string encode_row(const std::vector<std::string>& fields, char delimiter);

}  // namespace mtle::csv
