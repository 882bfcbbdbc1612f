#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mlharness/csv.hpp"

namespace mlharness::metrics {

struct Column {
  std::string name;
  std::vector<std::string> values;
};

enum class ProblemCode {
  MissingColumn,
  ExtraColumn,
  RowCountMismatch,
  DuplicateId,
  UnknownId,
  NonNumeric,
  OutOfRange,
};

std::string to_string(ProblemCode code);

struct FormatProblem {
  ProblemCode code;
  std::string message;

  bool operator==(const FormatProblem&) const = default;
};

struct FormatReport {
  bool valid = true;
  std::vector<FormatProblem> problems;

  void add(ProblemCode code, std::string message) {
    problems.push_back({code, std::move(message)});
    valid = false;
  }
  bool has(ProblemCode code) const;
};

// A submission or answer table: one id column plus value columns, stored as
// text. Numeric interpretation happens per metric.
class SubmissionTable {
 public:
  SubmissionTable() = default;
  SubmissionTable(Column id_column, std::vector<Column> value_columns);

  // The id column is `id_column_name` when given and present, otherwise the
  // first column. Rows shorter than the header are padded with empty cells;
  // surplus cells are dropped and reported through `ragged_rows`.
  static SubmissionTable from_csv(const CsvDocument& doc,
                                  const std::optional<std::string>& id_column_name = std::nullopt,
                                  std::size_t* ragged_rows = nullptr);
  // Throws Malformed for a file without a header row.
  static SubmissionTable load(const std::string& path,
                              const std::optional<std::string>& id_column_name = std::nullopt,
                              std::size_t* ragged_rows = nullptr);

  const Column& id_column() const { return id_; }
  const std::vector<Column>& value_columns() const { return values_; }
  std::size_t row_count() const { return id_.values.size(); }

  const Column* find(const std::string& name) const;
  std::vector<std::string> column_names() const;

  // Numeric view of a value column; throws Malformed on a non-numeric cell.
  std::vector<double> numeric(std::size_t value_column) const;
  // All value columns concatenated column-major.
  std::vector<double> numeric_flat() const;
  std::vector<std::string> text_flat() const;

  // Rows reordered to follow `order` (ids of another table); throws
  // InvalidArgument when an id is absent.
  SubmissionTable aligned_to(const std::vector<std::string>& order,
                             const std::vector<std::string>& column_order) const;

  std::string to_csv() const;

 private:
  Column id_;
  std::vector<Column> values_;
};

}  // namespace mlharness::metrics
