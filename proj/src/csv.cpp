#include "mtle/csv.hpp"

#include <stdexcept>

namespace mtle::csv {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<Row> parse(std::string_view content, char delimiter) {
  std::vector<Row> rows;
  std::size_t i = 0;
  std::size_t line = 1;
  const std::size_t n = content.size();

  while (i < n) {
    Row row;
    row.line = line;
    bool row_done = false;
    while (!row_done) {
      std::string field;
      if (i < n && content[i] == '"') {
        ++i;  // opening quote
        bool closed = false;
        while (i < n) {
          char c = content[i];
          if (c == '"') {
            if (i + 1 < n && content[i + 1] == '"') {
              field.push_back('"');
              i += 2;
            } else {
              ++i;
              closed = true;
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
            ++i;
          }
        }
        if (!closed) fail(row.line, "unterminated quoted field");
        if (i < n && content[i] != delimiter && content[i] != '\n' && content[i] != '\r') {
          fail(line, "unexpected character after closing quote");
        }
      } else {
        while (i < n && content[i] != delimiter && content[i] != '\n' && content[i] != '\r') {
          field.push_back(content[i]);
          ++i;
        }
      }
      row.fields.push_back(std::move(field));

      if (i >= n) {
        row_done = true;
      } else if (content[i] == delimiter) {
        ++i;
      } else if (content[i] == '\r') {
        ++i;
        if (i < n && content[i] == '\n') ++i;
        ++line;
        row_done = true;
      } else {  // '\n'
        ++i;
        ++line;
        row_done = true;
      }
    }
    // Ignore a trailing blank line; interior blank lines surface as
    // wrong-column-count errors in the caller.
    if (!(i >= n && row.fields.size() == 1 && row.fields[0].empty() && !rows.empty())) {
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string encode_row(const std::vector<std::string>& fields, char delimiter) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out.push_back(delimiter);
    const std::string& f = fields[i];
    const bool needs_quotes = f.find_first_of(std::string{delimiter} + "\"\r\n") != std::string::npos;
    if (!needs_quotes) {
      out += f;
      continue;
    }
    out.push_back('"');
    for (char c : f) {
      if (c == '"') out.push_back('"');
      out.push_back(c);
    }
    out.push_back('"');
  }
  return out;
}

}  // namespace mtle::csv
