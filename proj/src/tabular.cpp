#include "dptab/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dptab::tabular {

using nlohmann::json;

int ColumnSpec::category_index(const std::string& v) const {
  for (size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == v) return static_cast<int>(i);
  return -1;
}

void ColumnSpec::validate() const {
  require(!name.empty(), "domain", "column with empty name");
  if (kind == ColumnKind::Numeric) {
    require(min <= max, "domain", "column '" + name + "': numeric min > max");
    require(categories.empty(), "domain", "column '" + name + "': numeric column with categories");
    require(render_precision >= 0 && render_precision <= 6, "domain",
            "column '" + name + "': render_precision out of [0,6]");
  } else {
    require(!categories.empty(), "domain", "column '" + name + "': categorical with no categories");
    std::set<std::string> seen(categories.begin(), categories.end());
    require(seen.size() == categories.size(), "domain",
            "column '" + name + "': duplicate categories");
  }
}

int TableSchema::column_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return static_cast<int>(i);
  return -1;
}

const ColumnSpec& TableSchema::column(const std::string& name) const {
  int idx = column_index(name);
  require(idx >= 0, "domain", "unknown column '" + name + "'");
  return columns[idx];
}

void TableSchema::validate() const {
  require(!columns.empty(), "domain", "schema has no columns");
  std::set<std::string> names;
  for (const auto& c : columns) {
    c.validate();
    require(names.insert(c.name).second, "domain", "duplicate column name '" + c.name + "'");
  }
  if (!target_column.empty()) {
    int idx = column_index(target_column);
    require(idx >= 0, "domain", "target column '" + target_column + "' not in schema");
    require(!columns[idx].is_numeric(), "domain",
            "target column '" + target_column + "' must be categorical");
  }
}

uint64_t TableSchema::fingerprint() const { return fnv1a(schema_to_json(*this)); }

double quantize(double v, int precision) {
  double scale = std::pow(10.0, precision);
  double scaled = v * scale;
  double r = std::floor(std::fabs(scaled) + 0.5);
  return std::copysign(r, scaled) / scale;
}

std::string render_numeric(double v, int precision) {
  if (v == 0.0) v = 0.0;  // normalize -0
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  return s;
}

std::string render_cell(const Cell& cell, const ColumnSpec& spec) {
  if (spec.is_numeric()) return render_numeric(std::get<double>(cell), spec.render_precision);
  return std::get<std::string>(cell);
}

std::optional<double> parse_numeric(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (end != begin + text.size() || errno == ERANGE) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  // Reject hex/inf/nan spellings strtod accepts.
  for (char c : text)
    if (std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E') return std::nullopt;
  return v;
}

bool cell_conforms(const Cell& cell, const ColumnSpec& spec) {
  if (spec.is_numeric()) {
    if (!std::holds_alternative<double>(cell)) return false;
    double v = std::get<double>(cell);
    return std::isfinite(v) && v >= spec.min && v <= spec.max;
  }
  if (!std::holds_alternative<std::string>(cell)) return false;
  return spec.category_index(std::get<std::string>(cell)) >= 0;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // unquoted field text
};

RawCsv parse_csv(const std::string& text, const std::string& origin) {
  RawCsv out;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  size_t line = 1, record_line = 1;
  size_t i = 0;
  auto push_field = [&] {
    record.push_back(field_was_quoted ? field : trim(field));
    field.clear();
    field_was_quoted = false;
  };
  auto push_record = [&] {
    push_field();
    if (record.size() == 1 && record[0].empty() && !quoted) {
      record.clear();  // blank line
      return;
    }
    if (out.header.empty()) {
      out.header = record;
    } else {
      if (record.size() != out.header.size())
        fail("parse", origin + ": line " + std::to_string(record_line) + " has " +
                          std::to_string(record.size()) + " fields, expected " +
                          std::to_string(out.header.size()));
      out.rows.push_back(record);
    }
    record.clear();
    record_line = line;
  };
  while (i < text.size()) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      if (c == '\n') ++line;
      field += c;
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        if (trim(field).empty()) {
          quoted = true;
          field_was_quoted = true;
          field.clear();
        } else {
          field += c;  // stray quote mid-field, keep literally
        }
        ++i;
        break;
      case ',':
        push_field();
        ++i;
        break;
      case '\r':
        ++i;
        break;
      case '\n':
        push_record();
        ++line;
        record_line = line;
        ++i;
        break;
      default:
        field += c;
        ++i;
    }
  }
  if (quoted) fail("parse", origin + ": unterminated quoted field");
  if (!field.empty() || !record.empty()) push_record();
  if (out.header.empty()) fail("parse", origin + ": empty file");
  return out;
}

// Smallest precision in [0,6] rendering v exactly; 6 if none does.
int needed_precision(double v) {
  for (int p = 0; p <= 6; ++p) {
    double q = quantize(v, p);
    if (std::fabs(q - v) <= std::fabs(v) * 1e-12 + 1e-12) return p;
  }
  return 6;
}

}  // namespace

DataTable from_csv_text(const std::string& text, const std::string& origin,
                        const std::map<std::string, ColumnKind>& overrides,
                        const std::string& target_column, bool dedup) {
  RawCsv raw = parse_csv(text, origin);
  const size_t n_cols = raw.header.size();
  {
    std::set<std::string> names;
    for (const auto& h : raw.header) {
      require(!h.empty(), "parse", origin + ": empty header name");
      require(names.insert(h).second, "parse", origin + ": duplicate header '" + h + "'");
    }
  }
  require(!raw.rows.empty(), "parse", origin + ": no data rows");

  // Missing cells are rejected: the pipeline expects fully observed tables.
  for (size_t r = 0; r < raw.rows.size(); ++r)
    for (size_t c = 0; c < n_cols; ++c)
      if (raw.rows[r][c].empty())
        fail("parse", origin + ": missing value in column '" + raw.header[c] + "' at data row " +
                          std::to_string(r + 1));

  DataTable table;
  table.schema.target_column = target_column;
  table.schema.columns.resize(n_cols);
  std::vector<std::vector<double>> numeric_cells(n_cols);

  for (size_t c = 0; c < n_cols; ++c) {
    ColumnSpec& spec = table.schema.columns[c];
    spec.name = raw.header[c];
    bool all_numeric = true;
    numeric_cells[c].resize(raw.rows.size());
    for (size_t r = 0; r < raw.rows.size() && all_numeric; ++r) {
      auto v = parse_numeric(raw.rows[r][c]);
      if (v)
        numeric_cells[c][r] = *v;
      else
        all_numeric = false;
    }
    auto it = overrides.find(spec.name);
    bool want_numeric = it != overrides.end() ? it->second == ColumnKind::Numeric : all_numeric;
    if (want_numeric && !all_numeric)
      fail("parse", origin + ": column '" + spec.name +
                        "' forced numeric but has non-numeric cells");
    if (want_numeric) {
      spec.kind = ColumnKind::Numeric;
      int precision = 0;
      for (double v : numeric_cells[c]) precision = std::max(precision, needed_precision(v));
      spec.render_precision = precision;
      double lo = numeric_cells[c][0], hi = numeric_cells[c][0];
      for (double& v : numeric_cells[c]) {
        v = quantize(v, precision);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      spec.min = lo;
      spec.max = hi;
    } else {
      spec.kind = ColumnKind::Categorical;
      std::set<std::string> seen;
      for (const auto& row : raw.rows)
        if (seen.insert(row[c]).second) spec.categories.push_back(row[c]);
    }
  }

  table.rows.reserve(raw.rows.size());
  std::set<std::vector<std::pair<int, std::string>>> seen;  // typed row key
  for (size_t r = 0; r < raw.rows.size(); ++r) {
    Row row(n_cols);
    std::vector<std::pair<int, std::string>> key(n_cols);
    for (size_t c = 0; c < n_cols; ++c) {
      const ColumnSpec& spec = table.schema.columns[c];
      if (spec.is_numeric()) {
        row[c] = numeric_cells[c][r];
        key[c] = {0, render_numeric(numeric_cells[c][r], spec.render_precision)};
      } else {
        row[c] = raw.rows[r][c];
        key[c] = {1, raw.rows[r][c]};
      }
    }
    if (!dedup || seen.insert(std::move(key)).second) table.rows.push_back(std::move(row));
  }

  table.schema.validate();
  return table;
}

DataTable load_csv(const std::string& path, const std::map<std::string, ColumnKind>& overrides,
                   const std::string& target_column, bool dedup) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv_text(ss.str(), path, overrides, target_column, dedup);
}

DataTable load_csv_with_schema(const std::string& path, const TableSchema& schema) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RawCsv raw = parse_csv(ss.str(), path);
  require(raw.header.size() == schema.columns.size(), "parse",
          path + ": header does not match schema arity");
  for (size_t c = 0; c < raw.header.size(); ++c)
    require(raw.header[c] == schema.columns[c].name, "parse",
            path + ": header column '" + raw.header[c] + "' does not match schema column '" +
                schema.columns[c].name + "'");
  DataTable table;
  table.schema = schema;
  table.rows.reserve(raw.rows.size());
  for (size_t r = 0; r < raw.rows.size(); ++r) {
    Row row(schema.columns.size());
    for (size_t c = 0; c < schema.columns.size(); ++c) {
      const ColumnSpec& spec = schema.columns[c];
      if (spec.is_numeric()) {
        auto v = parse_numeric(raw.rows[r][c]);
        require(v.has_value(), "parse",
                path + ": non-numeric cell in numeric column '" + spec.name + "' at data row " +
                    std::to_string(r + 1));
        row[c] = quantize(*v, spec.render_precision);
      } else {
        row[c] = raw.rows[r][c];
      }
      require(cell_conforms(row[c], spec), "parse",
              path + ": cell in column '" + spec.name + "' at data row " + std::to_string(r + 1) +
                  " does not conform to the schema");
    }
    table.rows.push_back(std::move(row));
  }
  require(!table.rows.empty(), "parse", path + ": no data rows");
  return table;
}

namespace {

std::string csv_escape(const std::string& field) {
  bool needs_quote = field.find_first_of(",\"\n\r") != std::string::npos ||
                     (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quote) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string to_csv_text(const DataTable& table) {
  std::string out;
  for (size_t c = 0; c < table.n_cols(); ++c) {
    if (c) out += ',';
    out += csv_escape(table.schema.columns[c].name);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (size_t c = 0; c < table.n_cols(); ++c) {
      if (c) out += ',';
      out += csv_escape(render_cell(row[c], table.schema.columns[c]));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const DataTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io", "cannot write '" + path + "'");
  out << to_csv_text(table);
  if (!out) fail("io", "write failed for '" + path + "'");
}

std::pair<DataTable, DataTable> split(const DataTable& table, double train_fraction,
                                      uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "domain",
          "train_fraction must lie strictly inside (0,1)");
  require(table.n_rows() > 0, "domain", "cannot split an empty table");
  const size_t n = table.n_rows();
  const size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * train_fraction));
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, fnv1a("split")));
  rng.shuffle(idx);
  std::vector<bool> in_train(n, false);
  for (size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
  DataTable train{table.schema, {}}, test{table.schema, {}};
  train.rows.reserve(n_train);
  test.rows.reserve(n - n_train);
  for (size_t i = 0; i < n; ++i) (in_train[i] ? train : test).rows.push_back(table.rows[i]);
  return {std::move(train), std::move(test)};
}

std::vector<double> class_ratio(const DataTable& table) {
  require(table.n_rows() > 0, "domain", "class_ratio of empty table");
  int t = table.schema.target_index();
  require(t >= 0, "domain", "class_ratio requires a target column");
  const ColumnSpec& spec = table.schema.columns[t];
  std::vector<double> counts(spec.categories.size(), 0.0);
  for (const auto& row : table.rows) {
    int k = spec.category_index(std::get<std::string>(row[t]));
    require(k >= 0, "domain", "target cell outside schema categories");
    counts[k] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(table.n_rows());
  return counts;
}

std::string schema_to_json(const TableSchema& schema) {
  json j;
  j["target_column"] = schema.target_column;
  j["columns"] = json::array();
  for (const auto& c : schema.columns) {
    json col;
    col["name"] = c.name;
    if (c.is_numeric()) {
      col["kind"] = "numeric";
      col["min"] = c.min;
      col["max"] = c.max;
      col["precision"] = c.render_precision;
    } else {
      col["kind"] = "categorical";
      col["categories"] = c.categories;
    }
    j["columns"].push_back(col);
  }
  return j.dump(2);
}

TableSchema schema_from_json(const std::string& text) {
  TableSchema schema;
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("parse", std::string("bad schema JSON: ") + e.what());
  }
  schema.target_column = j.value("target_column", "");
  for (const auto& col : j.at("columns")) {
    ColumnSpec spec;
    spec.name = col.at("name").get<std::string>();
    std::string kind = col.at("kind").get<std::string>();
    if (kind == "numeric") {
      spec.kind = ColumnKind::Numeric;
      spec.min = col.at("min").get<double>();
      spec.max = col.at("max").get<double>();
      spec.render_precision = col.at("precision").get<int>();
    } else if (kind == "categorical") {
      spec.kind = ColumnKind::Categorical;
      spec.categories = col.at("categories").get<std::vector<std::string>>();
    } else {
      fail("parse", "unknown column kind '" + kind + "'");
    }
    schema.columns.push_back(std::move(spec));
  }
  schema.validate();
  return schema;
}

}  // namespace dptab::tabular
