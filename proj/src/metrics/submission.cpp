#include "mlharness/metrics/submission.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::metrics {

std::string to_string(ProblemCode code) {
  switch (code) {
    case ProblemCode::MissingColumn: return "MissingColumn";
    case ProblemCode::ExtraColumn: return "ExtraColumn";
    case ProblemCode::RowCountMismatch: return "RowCountMismatch";
    case ProblemCode::DuplicateId: return "DuplicateId";
    case ProblemCode::UnknownId: return "UnknownId";
    case ProblemCode::NonNumeric: return "NonNumeric";
    case ProblemCode::OutOfRange: return "OutOfRange";
  }
  return "Unknown";
}

bool FormatReport::has(ProblemCode code) const {
  return std::any_of(problems.begin(), problems.end(),
                     [code](const FormatProblem& p) { return p.code == code; });
}

SubmissionTable::SubmissionTable(Column id_column, std::vector<Column> value_columns)
    : id_(std::move(id_column)), values_(std::move(value_columns)) {
  for (const Column& c : values_) {
    if (c.values.size() != id_.values.size()) {
      throw InvalidArgument("column '" + c.name + "' length differs from the id column");
    }
  }
}

SubmissionTable SubmissionTable::from_csv(const CsvDocument& doc,
                                          const std::optional<std::string>& id_column_name,
                                          std::size_t* ragged_rows) {
  if (doc.rows.empty() || doc.rows.front().empty()) {
    throw Malformed("table has no header row");
  }
  const auto& header = doc.rows.front();
  std::vector<Column> columns(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) columns[c].name = trim(header[c]);

  std::size_t ragged = 0;
  for (std::size_t r = 1; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    if (row.size() != header.size()) ++ragged;
    for (std::size_t c = 0; c < header.size(); ++c) {
      columns[c].values.push_back(c < row.size() ? row[c] : std::string());
    }
  }
  if (ragged_rows) *ragged_rows = ragged;

  std::size_t id_index = 0;
  if (id_column_name) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c].name == *id_column_name) {
        id_index = c;
        break;
      }
    }
  }
  Column id = std::move(columns[id_index]);
  for (std::string& v : id.values) v = trim(v);
  columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(id_index));
  return SubmissionTable(std::move(id), std::move(columns));
}

SubmissionTable SubmissionTable::load(const std::string& path,
                                      const std::optional<std::string>& id_column_name,
                                      std::size_t* ragged_rows) {
  return from_csv(read_csv(path), id_column_name, ragged_rows);
}

const Column* SubmissionTable::find(const std::string& name) const {
  if (id_.name == name) return &id_;
  for (const Column& c : values_) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::vector<std::string> SubmissionTable::column_names() const {
  std::vector<std::string> out{id_.name};
  for (const Column& c : values_) out.push_back(c.name);
  return out;
}

std::vector<double> SubmissionTable::numeric(std::size_t value_column) const {
  const Column& col = values_.at(value_column);
  std::vector<double> out;
  out.reserve(col.values.size());
  for (std::size_t r = 0; r < col.values.size(); ++r) {
    const auto v = parse_double(col.values[r]);
    if (!v || !std::isfinite(*v)) {
      throw Malformed("column '" + col.name + "' row " + std::to_string(r + 1) +
                      " is not a finite number");
    }
    out.push_back(*v);
  }
  return out;
}

std::vector<double> SubmissionTable::numeric_flat() const {
  std::vector<double> out;
  for (std::size_t c = 0; c < values_.size(); ++c) {
    const auto col = numeric(c);
    out.insert(out.end(), col.begin(), col.end());
  }
  return out;
}

std::vector<std::string> SubmissionTable::text_flat() const {
  std::vector<std::string> out;
  for (const Column& c : values_) out.insert(out.end(), c.values.begin(), c.values.end());
  return out;
}

SubmissionTable SubmissionTable::aligned_to(const std::vector<std::string>& order,
                                            const std::vector<std::string>& column_order) const {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < id_.values.size(); ++r) row_of.emplace(id_.values[r], r);

  std::vector<std::size_t> rows;
  rows.reserve(order.size());
  for (const std::string& id : order) {
    const auto it = row_of.find(id);
    if (it == row_of.end()) throw InvalidArgument("id '" + id + "' missing from submission");
    rows.push_back(it->second);
  }

  Column id{id_.name, order};
  std::vector<Column> cols;
  for (const std::string& name : column_order) {
    const Column* src = find(name);
    if (!src || src == &id_) throw InvalidArgument("column '" + name + "' missing from submission");
    Column out{name, {}};
    out.values.reserve(rows.size());
    for (std::size_t r : rows) out.values.push_back(src->values[r]);
    cols.push_back(std::move(out));
  }
  return SubmissionTable(std::move(id), std::move(cols));
}

std::string SubmissionTable::to_csv() const {
  std::string out = csv_line(column_names());
  for (std::size_t r = 0; r < row_count(); ++r) {
    std::vector<std::string> cells{id_.values[r]};
    for (const Column& c : values_) cells.push_back(c.values[r]);
    out += csv_line(cells);
  }
  return out;
}

}  // namespace mlharness::metrics
