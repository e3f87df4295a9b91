#pragma once

#include <string>
#include <vector>

#include "dptab/common.hpp"
#include "dptab/serializer.hpp"
#include "dptab/tabular.hpp"

namespace dptab::pseudo {

enum class StatsSource { DeclaredByOwner, ExtractedFromPrivate };

// The caveat attached to ledgers when pseudo statistics were read off the
// private table rather than declared by the data owner.
extern const char* kExtractionCaveat;

// Per-column ranges / category lists used to draw uniform pseudo data.
struct PseudoStats {
  tabular::TableSchema schema;  // mirrors the private schema
  StatsSource source = StatsSource::DeclaredByOwner;

  bool needs_caveat() const { return source == StatsSource::ExtractedFromPrivate; }
};

// Exact min/max and category sets read from the private table. The result
// carries the extracted-from-private flag so downstream ledgers inherit the
// caveat.
PseudoStats extract_stats(const tabular::DataTable& private_table);

PseudoStats declared_stats(const tabular::TableSchema& schema);

// n rows with every column drawn independently and uniformly: numeric cells
// uniform on [min, max] then quantized to the column precision, categorical
// cells uniform over the category list.
tabular::DataTable sample_uniform(const PseudoStats& stats, size_t n, Rng& rng);

// Serializes a public table under its own schema (public keys and values,
// public target first). Never sees the private schema.
std::vector<serial::SerializedRecord> adapt_public(const tabular::DataTable& public_table);

// Stage-1 training corpus. Constructed only by the functions below, so the
// type system keeps private tables out of the non-private training path.
class Corpus {
 public:
  const tabular::TableSchema& schema() const { return schema_; }
  const std::vector<tabular::Row>& rows() const { return rows_; }
  bool from_public() const { return from_public_; }
  std::vector<std::string> caveats() const;

 private:
  Corpus() = default;
  tabular::TableSchema schema_;
  std::vector<tabular::Row> rows_;
  StatsSource source_ = StatsSource::DeclaredByOwner;
  bool from_public_ = false;
  friend Corpus uniform_corpus(const PseudoStats&, size_t, Rng&);
  friend Corpus public_corpus(const tabular::DataTable&);
};

Corpus uniform_corpus(const PseudoStats& stats, size_t n, Rng& rng);
Corpus public_corpus(const tabular::DataTable& public_table);

}  // namespace dptab::pseudo
