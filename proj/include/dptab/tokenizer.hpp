#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dptab/common.hpp"

namespace dptab::bpe {

// Byte-level BPE. Ids 0..255 are raw bytes, then BOS/EOS/PAD, then merged
// symbols in learned order. Encoding always succeeds via byte fallback.
class TokenizerModel {
 public:
  static constexpr int kNumBytes = 256;
  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  static constexpr int kPad = 258;
  static constexpr int kFirstMergeId = 259;

  struct Merge {
    int left = 0;
    int right = 0;
  };

  int vocab_size() const { return kFirstMergeId + static_cast<int>(merges_.size()); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& symbol_bytes(int id) const;
  bool is_special(int id) const { return id >= kNumBytes && id < kFirstMergeId; }

  void add_merge(int left, int right);

  std::string to_json() const;
  static TokenizerModel from_json(const std::string& text);

 private:
  std::vector<Merge> merges_;
  std::vector<std::string> symbols_;  // byte expansion per id (specials empty)
  friend TokenizerModel train_bpe(const std::vector<std::string>&, int);

 public:
  TokenizerModel();
};

struct TokenStream {
  std::vector<int> ids;
  std::vector<std::pair<size_t, size_t>> offsets;  // byte range per token
};

// Greedy highest-frequency pair merging until the vocab budget is reached or
// no pair occurs twice. Frequency ties break on the lexicographically
// smallest (left bytes, right bytes) pair, which makes training fully
// deterministic.
TokenizerModel train_bpe(const std::vector<std::string>& corpus, int vocab_size);

TokenStream encode(const TokenizerModel& tok, const std::string& text);
std::string decode(const TokenizerModel& tok, const std::vector<int>& ids);

void save_tokenizer(const TokenizerModel& tok, const std::string& path);
TokenizerModel load_tokenizer(const std::string& path);

}  // namespace dptab::bpe
