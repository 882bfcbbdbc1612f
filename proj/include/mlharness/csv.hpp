#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mlharness {

// RFC 4180 subset: `,` delimiter, `"` quoting with `""` escapes, LF or CRLF
// line ends. A UTF-8 byte-order mark on the first cell is dropped.
struct CsvDocument {
  std::vector<std::vector<std::string>> rows;
};

// Throws Malformed on an unterminated quoted field.
CsvDocument parse_csv(std::string_view text);
CsvDocument read_csv(const std::string& path);

std::string csv_escape(std::string_view cell);
std::string csv_line(const std::vector<std::string>& cells);

}  // namespace mlharness
