#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dptab/common.hpp"

namespace dptab::tabular {

enum class ColumnKind { Numeric, Categorical };

// A cell is a typed value: double for numeric columns, string for
// categorical ones. Numeric cells are always quantized to their column's
// render precision, which makes text round trips exact.
using Cell = std::variant<double, std::string>;

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Categorical;
  double min = 0.0;                     // numeric only
  double max = 0.0;                     // numeric only
  int render_precision = 0;             // numeric only, decimal places (0..6)
  std::vector<std::string> categories;  // categorical only, ordered, unique

  bool is_numeric() const { return kind == ColumnKind::Numeric; }
  int category_index(const std::string& v) const;  // -1 if absent
  void validate() const;
};

struct TableSchema {
  std::vector<ColumnSpec> columns;
  std::string target_column;

  int column_index(const std::string& name) const;  // -1 if absent
  const ColumnSpec& column(const std::string& name) const;
  int target_index() const { return column_index(target_column); }
  void validate() const;
  uint64_t fingerprint() const;
};

using Row = std::vector<Cell>;

struct DataTable {
  TableSchema schema;
  std::vector<Row> rows;

  size_t n_rows() const { return rows.size(); }
  size_t n_cols() const { return schema.columns.size(); }
  const Cell& at(size_t row, size_t col) const { return rows[row][col]; }
};

// Round half away from zero to `precision` decimal places.
double quantize(double v, int precision);

// Numeric cell text: integers bare, otherwise fixed precision with trailing
// zeros trimmed.
std::string render_numeric(double v, int precision);

std::string render_cell(const Cell& cell, const ColumnSpec& spec);

// Parses a full numeric literal (decimal or scientific); nullopt otherwise.
std::optional<double> parse_numeric(const std::string& text);

// True when the cell value conforms to the column spec (category member,
// or numeric inside [min, max]).
bool cell_conforms(const Cell& cell, const ColumnSpec& spec);

// CSV ingestion: header row required, RFC-4180 quoting, exact duplicates
// dropped (first kept). Column kinds are inferred (numeric only if every
// cell parses) unless overridden by name. dedup=false keeps duplicates
// (used when scoring synthetic tables, where repeats are legitimate).
DataTable load_csv(const std::string& path,
                   const std::map<std::string, ColumnKind>& overrides = {},
                   const std::string& target_column = "", bool dedup = true);

DataTable from_csv_text(const std::string& text, const std::string& origin,
                        const std::map<std::string, ColumnKind>& overrides = {},
                        const std::string& target_column = "", bool dedup = true);

// Loads a CSV against a known schema: header must match the schema columns,
// every cell must conform. No re-inference, no dedup.
DataTable load_csv_with_schema(const std::string& path, const TableSchema& schema);

std::string to_csv_text(const DataTable& table);
void write_csv(const DataTable& table, const std::string& path);

// Deterministic split: train gets floor(n * train_fraction) rows chosen by a
// seeded permutation; original row order is preserved within each half.
std::pair<DataTable, DataTable> split(const DataTable& table, double train_fraction,
                                      uint64_t seed);

// Proportion of each target category, in schema category order.
std::vector<double> class_ratio(const DataTable& table);

// Structured schema description (JSON text).
std::string schema_to_json(const TableSchema& schema);
TableSchema schema_from_json(const std::string& text);

}  // namespace dptab::tabular
