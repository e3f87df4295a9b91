#include "dptab/serializer.hpp"

#include <algorithm>

namespace dptab::serial {

using tabular::Cell;
using tabular::ColumnSpec;
using tabular::TableSchema;

ColumnOrder fixed_order(const TableSchema& schema) {
  ColumnOrder order;
  int t = schema.target_index();
  if (t >= 0) order.names.push_back(schema.columns[t].name);
  for (const auto& c : schema.columns)
    if (schema.column_index(c.name) != t) order.names.push_back(c.name);
  return order;
}

ColumnOrder make_order(const TableSchema& schema, bool shuffle, Rng& rng) {
  require(!schema.columns.empty(), "domain", "make_order on empty schema");
  if (!shuffle) return fixed_order(schema);
  ColumnOrder order;
  for (const auto& c : schema.columns) order.names.push_back(c.name);
  rng.shuffle(order.names);
  return order;
}

SerializedRecord serialize_record(const tabular::Row& record, const TableSchema& schema,
                                  const ColumnOrder& order) {
  require(record.size() == schema.columns.size(), "domain",
          "record arity does not match schema");
  require(order.names.size() == schema.columns.size(), "domain",
          "column order arity does not match schema");
  SerializedRecord sr;
  auto push = [&](const std::string& piece, TokenRole role, const std::string& column) {
    if (piece.empty()) return;
    size_t b = sr.text.size();
    sr.text += piece;
    sr.spans.push_back({b, sr.text.size(), role, column});
  };
  for (size_t i = 0; i < order.names.size(); ++i) {
    int c = schema.column_index(order.names[i]);
    require(c >= 0, "domain", "order names column '" + order.names[i] + "' not in schema");
    const ColumnSpec& spec = schema.columns[c];
    push(spec.name, TokenRole::Key, "");
    push(" is ", TokenRole::NonFunctional, "");
    push(tabular::render_cell(record[c], spec), TokenRole::Value, spec.name);
    bool last = i + 1 == order.names.size();
    push(last ? "." : ", ", TokenRole::NonFunctional, "");
  }
  return sr;
}

namespace {

// Checks a parsed value against its column; numeric values are quantized to
// the column precision so accepted cells always conform to the schema.
std::pair<FieldState, Cell> check_value(const std::string& raw, const ColumnSpec& spec) {
  if (spec.is_numeric()) {
    auto v = tabular::parse_numeric(raw);
    if (!v) return {FieldState::Invalid, Cell{}};
    double q = tabular::quantize(*v, spec.render_precision);
    if (q < spec.min || q > spec.max) return {FieldState::Invalid, Cell{}};
    return {FieldState::Valid, q};
  }
  if (spec.category_index(raw) < 0) return {FieldState::Invalid, Cell{}};
  return {FieldState::Valid, raw};
}

// Column index when `chunk` starts with "<column name> is ", else -1.
int field_start(const std::string& chunk, const TableSchema& schema, size_t* value_begin) {
  int best = -1;
  size_t best_len = 0;
  for (size_t c = 0; c < schema.columns.size(); ++c) {
    const std::string& name = schema.columns[c].name;
    if (chunk.size() >= name.size() + 4 && chunk.compare(0, name.size(), name) == 0 &&
        chunk.compare(name.size(), 4, " is ") == 0) {
      if (name.size() > best_len) {
        best = static_cast<int>(c);
        best_len = name.size();
      }
    }
  }
  if (best >= 0) *value_begin = best_len + 4;
  return best;
}

}  // namespace

ParsedRecord parse_generation(const std::string& text, const TableSchema& schema) {
  ParsedRecord out;
  out.state.assign(schema.columns.size(), FieldState::Missing);
  out.cell.resize(schema.columns.size());

  // Chunk on ", " separators, stripping one trailing "." terminator.
  std::string body = text;
  if (!body.empty() && body.back() == '.') body.pop_back();
  std::vector<std::string> chunks;
  size_t pos = 0;
  while (pos <= body.size()) {
    size_t sep = body.find(", ", pos);
    if (sep == std::string::npos) {
      chunks.push_back(body.substr(pos));
      break;
    }
    chunks.push_back(body.substr(pos, sep - pos));
    pos = sep + 2;
  }

  int current_col = -1;
  std::string current_value;
  auto flush = [&] {
    if (current_col < 0) return;
    if (out.state[current_col] != FieldState::Missing) {
      ++out.duplicate_fields;
    } else {
      auto [st, cell] = check_value(current_value, schema.columns[current_col]);
      out.state[current_col] = st;
      if (st == FieldState::Valid) out.cell[current_col] = std::move(cell);
    }
    ++out.parsed_fields;
    current_col = -1;
    current_value.clear();
  };
  for (const auto& chunk : chunks) {
    size_t value_begin = 0;
    int col = field_start(chunk, schema, &value_begin);
    if (col >= 0) {
      flush();
      current_col = col;
      current_value = chunk.substr(value_begin);
    } else if (current_col >= 0) {
      current_value += ", " + chunk;  // separator belonged to the value
    }
  }
  flush();
  return out;
}

std::vector<TokenRole> tag_token_roles(const SerializedRecord& sr,
                                       const std::vector<std::pair<size_t, size_t>>& offsets) {
  std::vector<TokenRole> roles;
  roles.reserve(offsets.size());
  for (const auto& [begin, end] : offsets) {
    require(begin <= end && end <= sr.text.size(), "domain", "token offsets out of bounds");
    size_t overlap[3] = {0, 0, 0};
    for (const auto& span : sr.spans) {
      size_t lo = std::max(begin, span.begin);
      size_t hi = std::min(end, span.end);
      if (hi > lo) overlap[static_cast<int>(span.role)] += hi - lo;
    }
    size_t value_bytes = overlap[static_cast<int>(TokenRole::Value)];
    size_t key_bytes = overlap[static_cast<int>(TokenRole::Key)];
    size_t glue_bytes = overlap[static_cast<int>(TokenRole::NonFunctional)];
    if (value_bytes >= key_bytes && value_bytes >= glue_bytes)
      roles.push_back(TokenRole::Value);
    else if (key_bytes > glue_bytes)
      roles.push_back(TokenRole::Key);
    else
      roles.push_back(TokenRole::NonFunctional);
  }
  return roles;
}

}  // namespace dptab::serial
