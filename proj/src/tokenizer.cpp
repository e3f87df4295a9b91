#include "dptab/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace dptab::bpe {

using nlohmann::json;

TokenizerModel::TokenizerModel() {
  symbols_.resize(kFirstMergeId);
  for (int b = 0; b < kNumBytes; ++b) symbols_[b] = std::string(1, static_cast<char>(b));
  // specials expand to nothing
}

const std::string& TokenizerModel::symbol_bytes(int id) const {
  require(id >= 0 && id < vocab_size(), "domain",
          "token id " + std::to_string(id) + " outside vocab");
  return symbols_[id];
}

void TokenizerModel::add_merge(int left, int right) {
  require(left >= 0 && left < vocab_size() && right >= 0 && right < vocab_size(), "domain",
          "merge references unknown symbol");
  require(!is_special(left) && !is_special(right), "domain", "merge references special token");
  merges_.push_back({left, right});
  symbols_.push_back(symbols_[left] + symbols_[right]);
}

TokenizerModel train_bpe(const std::vector<std::string>& corpus, int vocab_size) {
  require(!corpus.empty(), "domain", "train_bpe on empty corpus");
  require(vocab_size >= TokenizerModel::kFirstMergeId, "domain",
          "vocab_size must be at least " + std::to_string(TokenizerModel::kFirstMergeId));

  TokenizerModel tok;
  std::vector<std::vector<int>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& line : corpus) {
    std::vector<int> seq;
    seq.reserve(line.size());
    for (unsigned char b : line) seq.push_back(b);
    seqs.push_back(std::move(seq));
  }

  std::unordered_map<uint64_t, long> counts;
  while (tok.vocab_size() < vocab_size) {
    counts.clear();
    for (const auto& seq : seqs)
      for (size_t i = 0; i + 1 < seq.size(); ++i)
        ++counts[(static_cast<uint64_t>(seq[i]) << 32) | static_cast<uint32_t>(seq[i + 1])];

    std::pair<int, int> best{-1, -1};
    long best_count = 1;  // pair must repeat
    for (const auto& [packed, count] : counts) {
      if (count < best_count) continue;
      std::pair<int, int> pair{static_cast<int>(packed >> 32),
                               static_cast<int>(packed & 0xffffffffu)};
      if (count > best_count) {
        best = pair;
        best_count = count;
        continue;
      }
      if (best.first < 0) continue;
      auto key = std::make_pair(tok.symbol_bytes(pair.first), tok.symbol_bytes(pair.second));
      auto best_key = std::make_pair(tok.symbol_bytes(best.first), tok.symbol_bytes(best.second));
      if (key < best_key) best = pair;
    }
    if (best.first < 0) break;

    int merged = tok.vocab_size();
    tok.add_merge(best.first, best.second);
    for (auto& seq : seqs) {
      size_t w = 0;
      for (size_t r = 0; r < seq.size();) {
        if (r + 1 < seq.size() && seq[r] == best.first && seq[r + 1] == best.second) {
          seq[w++] = merged;
          r += 2;
        } else {
          seq[w++] = seq[r++];
        }
      }
      seq.resize(w);
    }
  }
  return tok;
}

TokenStream encode(const TokenizerModel& tok, const std::string& text) {
  TokenStream out;
  std::vector<int> ids;
  std::vector<std::pair<size_t, size_t>> offs;
  ids.reserve(text.size());
  offs.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    ids.push_back(static_cast<unsigned char>(text[i]));
    offs.push_back({i, i + 1});
  }
  const auto& merges = tok.merges();
  for (size_t m = 0; m < merges.size(); ++m) {
    int merged = TokenizerModel::kFirstMergeId + static_cast<int>(m);
    size_t w = 0;
    for (size_t r = 0; r < ids.size();) {
      if (r + 1 < ids.size() && ids[r] == merges[m].left && ids[r + 1] == merges[m].right) {
        ids[w] = merged;
        offs[w] = {offs[r].first, offs[r + 1].second};
        ++w;
        r += 2;
      } else {
        ids[w] = ids[r];
        offs[w] = offs[r];
        ++w;
        ++r;
      }
    }
    ids.resize(w);
    offs.resize(w);
  }
  out.ids = std::move(ids);
  out.offsets = std::move(offs);
  return out;
}

std::string decode(const TokenizerModel& tok, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) out += tok.symbol_bytes(id);
  return out;
}

namespace {

std::string to_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

}  // namespace

std::string TokenizerModel::to_json() const {
  json j;
  j["format"] = "dptab-bpe-v1";
  j["specials"] = {{"bos", kBos}, {"eos", kEos}, {"pad", kPad}};
  j["merges"] = json::array();
  for (const auto& m : merges_) {
    j["merges"].push_back({{"left", m.left},
                           {"right", m.right},
                           {"bytes", to_hex(symbols_[kFirstMergeId + (&m - merges_.data())])}});
  }
  return j.dump(2);
}

TokenizerModel TokenizerModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("parse", std::string("bad tokenizer JSON: ") + e.what());
  }
  require(j.value("format", "") == "dptab-bpe-v1", "parse", "unknown tokenizer format");
  TokenizerModel tok;
  for (const auto& m : j.at("merges")) tok.add_merge(m.at("left").get<int>(), m.at("right").get<int>());
  return tok;
}

void save_tokenizer(const TokenizerModel& tok, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io", "cannot write '" + path + "'");
  out << tok.to_json();
}

TokenizerModel load_tokenizer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return TokenizerModel::from_json(ss.str());
}

}  // namespace dptab::bpe
