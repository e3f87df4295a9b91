#include "dptab/pseudo.hpp"

namespace dptab::pseudo {

using tabular::Cell;
using tabular::ColumnKind;
using tabular::DataTable;

const char* kExtractionCaveat =
    "stage-1 pseudo statistics were extracted from the private data without noise; "
    "the reported epsilon does not account for this release";

PseudoStats extract_stats(const DataTable& private_table) {
  require(private_table.n_rows() > 0, "domain", "extract_stats on empty table");
  PseudoStats stats;
  stats.schema = private_table.schema;  // min/max and categories already exact
  stats.source = StatsSource::ExtractedFromPrivate;
  return stats;
}

PseudoStats declared_stats(const tabular::TableSchema& schema) {
  schema.validate();
  PseudoStats stats;
  stats.schema = schema;
  stats.source = StatsSource::DeclaredByOwner;
  return stats;
}

DataTable sample_uniform(const PseudoStats& stats, size_t n, Rng& rng) {
  require(n >= 1, "domain", "sample_uniform requires n >= 1");
  DataTable table;
  table.schema = stats.schema;
  table.rows.reserve(n);
  for (size_t r = 0; r < n; ++r) {
    tabular::Row row(table.n_cols());
    for (size_t c = 0; c < table.n_cols(); ++c) {
      const auto& spec = table.schema.columns[c];
      if (spec.kind == ColumnKind::Numeric) {
        double v = tabular::quantize(rng.uniform(spec.min, spec.max), spec.render_precision);
        row[c] = std::min(spec.max, std::max(spec.min, v));
      } else {
        row[c] = spec.categories[rng.below(spec.categories.size())];
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<serial::SerializedRecord> adapt_public(const DataTable& public_table) {
  require(public_table.n_rows() > 0, "domain", "adapt_public on empty table");
  public_table.schema.validate();
  auto order = serial::fixed_order(public_table.schema);
  std::vector<serial::SerializedRecord> corpus;
  corpus.reserve(public_table.n_rows());
  for (const auto& row : public_table.rows)
    corpus.push_back(serial::serialize_record(row, public_table.schema, order));
  return corpus;
}

std::vector<std::string> Corpus::caveats() const {
  if (!from_public_ && source_ == StatsSource::ExtractedFromPrivate) return {kExtractionCaveat};
  return {};
}

Corpus uniform_corpus(const PseudoStats& stats, size_t n, Rng& rng) {
  DataTable table = sample_uniform(stats, n, rng);
  Corpus corpus;
  corpus.schema_ = table.schema;
  corpus.rows_ = std::move(table.rows);
  corpus.source_ = stats.source;
  corpus.from_public_ = false;
  return corpus;
}

Corpus public_corpus(const DataTable& public_table) {
  require(public_table.n_rows() > 0, "domain", "public_corpus on empty table");
  public_table.schema.validate();
  Corpus corpus;
  corpus.schema_ = public_table.schema;
  corpus.rows_ = public_table.rows;
  corpus.source_ = StatsSource::DeclaredByOwner;
  corpus.from_public_ = true;
  return corpus;
}

}  // namespace dptab::pseudo
