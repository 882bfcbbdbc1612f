#include "mlharness/csv.hpp"

#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness {

CsvDocument parse_csv(std::string_view text) {
  if (starts_with(text, "\xEF\xBB\xBF")) text.remove_prefix(3);
  CsvDocument doc;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(cell));
        cell.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !cell.empty()) {
          row.push_back(std::move(cell));
          doc.rows.push_back(std::move(row));
        }
        row.clear();
        cell.clear();
        row_has_content = false;
        break;
      default:
        cell += c;
        row_has_content = true;
    }
  }
  if (in_quotes) throw Malformed("unterminated quoted field");
  if (row_has_content || !cell.empty()) {
    row.push_back(std::move(cell));
    doc.rows.push_back(std::move(row));
  }
  return doc;
}

CsvDocument read_csv(const std::string& path) { return parse_csv(read_file(path)); }

std::string csv_escape(std::string_view cell) {
  if (cell.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(cells[i]);
  }
  out += '\n';
  return out;
}

}  // namespace mlharness
