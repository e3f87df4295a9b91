#pragma once

#include <string>
#include <vector>

#include "dptab/common.hpp"
#include "dptab/tabular.hpp"

namespace dptab::serial {

enum class TokenRole { Key, Value, NonFunctional };

struct Span {
  size_t begin = 0;  // byte offsets into SerializedRecord::text
  size_t end = 0;
  TokenRole role = TokenRole::NonFunctional;
  std::string column;  // set for Value spans
};

// Text realization of one record under the "<key> is <value>, " template,
// terminal ".". Spans are contiguous, non-overlapping and cover the text.
struct SerializedRecord {
  std::string text;
  std::vector<Span> spans;
};

struct ColumnOrder {
  std::vector<std::string> names;
};

// Fixed order puts the target column first, the rest in schema order; with
// shuffle a fresh uniform permutation is drawn from the rng.
ColumnOrder make_order(const tabular::TableSchema& schema, bool shuffle, Rng& rng);
ColumnOrder fixed_order(const tabular::TableSchema& schema);

SerializedRecord serialize_record(const tabular::Row& record, const tabular::TableSchema& schema,
                                  const ColumnOrder& order);

enum class FieldState { Missing, Valid, Invalid };

struct ParsedRecord {
  std::vector<FieldState> state;    // per schema column
  std::vector<tabular::Cell> cell;  // meaningful where state == Valid
  int parsed_fields = 0;            // template-shaped fields seen (known key)
  int duplicate_fields = 0;

  int count(FieldState s) const {
    int n = 0;
    for (auto st : state) n += (st == s);
    return n;
  }
  bool fully_valid() const { return count(FieldState::Valid) == static_cast<int>(state.size()); }
  // Fields a sampler would have to fill or fix.
  int needs_fixing() const { return static_cast<int>(state.size()) - count(FieldState::Valid); }
};

// Best-effort extraction of "<key> is <value>" fields from arbitrary model
// output. Unknown keys are skipped; a ", " inside a value is re-joined as
// long as the following chunk does not itself start a known field. First
// occurrence of a key wins. Never throws on malformed input.
ParsedRecord parse_generation(const std::string& text, const tabular::TableSchema& schema);

// Lifts byte-level roles onto tokens by majority byte overlap; ties go to
// Value so that privacy-sensitive bytes are never under-weighted.
std::vector<TokenRole> tag_token_roles(const SerializedRecord& sr,
                                       const std::vector<std::pair<size_t, size_t>>& offsets);

}  // namespace dptab::serial
