#include "dptab/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>

#include <json.hpp>

#include "dptab/lm.hpp"
#include "dptab/tokenizer.hpp"

namespace dptab::sampler {

using nlohmann::json;
using tabular::DataTable;
using tabular::TableSchema;

void SamplingConfig::validate() const {
  require(max_new_tokens >= 1, "config", "max_new_tokens must be positive");
  require(temperature > 0.0, "config", "temperature must be positive");
  require(rejection_budget >= 1, "config", "rejection_budget must be positive");
  require(imputation_threshold >= 0, "config", "imputation_threshold must be non-negative");
}

namespace {

// A '.' ends the row unless it could still be a decimal point (digit before
// it and nothing after it yet).
bool has_terminator(const std::string& text) {
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  for (size_t p = 0; p < text.size(); ++p) {
    if (text[p] != '.') continue;
    if (p == 0 || !digit(text[p - 1])) return true;
    if (p + 1 < text.size() && !digit(text[p + 1])) return true;
  }
  return false;
}

}  // namespace

std::string CheckpointGenerator::generate(const std::string& prompt, int max_new_tokens,
                                          double temperature, Rng& rng) const {
  require(temperature > 0.0, "domain", "temperature must be positive");
  const auto& tok = ckpt_.tokenizer;
  const auto& params = ckpt_.params;
  bpe::TokenStream prefix = bpe::encode(tok, prompt);
  require(static_cast<int>(prefix.ids.size()) + 1 < params.config.context_length, "domain",
          "prompt does not fit the model context");

  lm::Decoder decoder(params);
  const std::vector<double>* logits = &decoder.push(bpe::TokenizerModel::kBos);
  for (int id : prefix.ids) logits = &decoder.push(id);

  std::string out;
  const int vocab = params.config.vocab_size;
  for (int produced = 0; produced < max_new_tokens; ++produced) {
    if (decoder.length() >= params.config.context_length) break;
    // Sample from softmax(logits / T) by inverse CDF.
    double maxv = -HUGE_VAL;
    for (int v = 0; v < vocab; ++v) maxv = std::max(maxv, (*logits)[v] / temperature);
    double denom = 0.0;
    std::vector<double> probs(vocab);
    for (int v = 0; v < vocab; ++v) {
      probs[v] = std::exp((*logits)[v] / temperature - maxv);
      denom += probs[v];
    }
    double u = rng.uniform() * denom;
    int picked = vocab - 1;
    double acc = 0.0;
    for (int v = 0; v < vocab; ++v) {
      acc += probs[v];
      if (u < acc) {
        picked = v;
        break;
      }
    }
    if (picked == bpe::TokenizerModel::kEos || picked == bpe::TokenizerModel::kBos ||
        picked == bpe::TokenizerModel::kPad)
      break;
    out += tok.symbol_bytes(picked);
    if (has_terminator(out)) break;
    logits = &decoder.push(picked);
  }
  return out;
}

RowAttempt generate_row(const TextGenerator& gen, const TableSchema& schema,
                        const SamplingConfig& cfg, Rng& rng) {
  int t = schema.target_index();
  require(t >= 0, "domain", "sampling requires a target column");
  std::string prompt = schema.columns[t].name + " is ";
  RowAttempt attempt;
  attempt.text = prompt + gen.generate(prompt, cfg.max_new_tokens, cfg.temperature, rng);
  attempt.parsed = serial::parse_generation(attempt.text, schema);
  return attempt;
}

namespace {

tabular::Row row_from_parsed(const serial::ParsedRecord& parsed) {
  return parsed.cell;
}

// Prompt for filling `missing`: the currently valid fields serialized in the
// fixed target-first order, then "<missing key> is ".
std::string imputation_prompt(const TableSchema& schema, const serial::ParsedRecord& parsed,
                              const std::string& missing) {
  auto order = serial::fixed_order(schema);
  std::string prompt;
  for (const auto& name : order.names) {
    int c = schema.column_index(name);
    if (parsed.state[c] != serial::FieldState::Valid) continue;
    prompt += name + " is " + tabular::render_cell(parsed.cell[c], schema.columns[c]) + ", ";
  }
  prompt += missing + " is ";
  return prompt;
}

// First field of a continuation: cut at ", "; strip one trailing "." only if
// that makes the value parse.
std::string extract_value_text(const std::string& continuation) {
  std::string v = continuation;
  size_t sep = v.find(", ");
  if (sep != std::string::npos) v = v.substr(0, sep);
  return v;
}

bool try_fill(const TableSchema& schema, serial::ParsedRecord& parsed, int col,
              const std::string& raw) {
  const auto& spec = schema.columns[col];
  auto attempt = [&](const std::string& text) {
    auto probe = serial::parse_generation(spec.name + " is " + text + ".", schema);
    if (probe.state[col] == serial::FieldState::Valid) {
      parsed.state[col] = serial::FieldState::Valid;
      parsed.cell[col] = probe.cell[col];
      return true;
    }
    return false;
  };
  if (attempt(raw)) return true;
  if (!raw.empty() && raw.back() == '.') {
    std::string trimmed = raw.substr(0, raw.size() - 1);
    return attempt(trimmed);
  }
  return false;
}

struct WaveOutcome {
  std::vector<std::optional<tabular::Row>> rows;
  std::vector<size_t> imputed;
  std::vector<bool> over_threshold;
};

}  // namespace

DataTable rejection_sample(const TextGenerator& gen, const TableSchema& schema, size_t n,
                           const SamplingConfig& cfg, SampleReport* report) {
  cfg.validate();
  require(n >= 1, "domain", "cannot sample zero rows");
  auto t0 = std::chrono::steady_clock::now();
  const size_t budget = n * static_cast<size_t>(cfg.rejection_budget);
  DataTable out;
  out.schema = schema;
  size_t attempts = 0;
  uint64_t wave = 0;
  while (out.rows.size() < n && attempts < budget) {
    size_t batch = std::min(n - out.rows.size(), budget - attempts);
    std::vector<std::optional<tabular::Row>> rows(batch);
    parallel_for(batch, [&](size_t i) {
      Rng rng(derive_seed(cfg.seed, fnv1a("reject-wave") ^ wave, i));
      RowAttempt attempt = generate_row(gen, schema, cfg, rng);
      if (attempt.parsed.fully_valid()) rows[i] = row_from_parsed(attempt.parsed);
    });
    for (auto& r : rows)
      if (r && out.rows.size() < n) out.rows.push_back(std::move(*r));
    attempts += batch;
    ++wave;
  }
  auto t1 = std::chrono::steady_clock::now();
  if (report) {
    report->requested = n;
    report->accepted = out.rows.size();
    report->attempts = attempts;
    report->accept_rate =
        attempts ? static_cast<double>(out.rows.size()) / static_cast<double>(attempts) : 0.0;
    report->seconds = std::chrono::duration<double>(t1 - t0).count();
    report->mode = "reject";
  }
  if (out.rows.size() < n)
    fail("budget", "rejection sampling accepted " + std::to_string(out.rows.size()) + " of " +
                       std::to_string(n) + " rows within " + std::to_string(budget) +
                       " attempts (accept rate " +
                       std::to_string(attempts ? static_cast<double>(out.rows.size()) / attempts
                                               : 0.0) +
                       ")");
  return out;
}

DataTable imputation_sample(const TextGenerator& gen, const TableSchema& schema, size_t n,
                            const SamplingConfig& cfg, SampleReport* report) {
  cfg.validate();
  require(n >= 1, "domain", "cannot sample zero rows");
  auto t0 = std::chrono::steady_clock::now();
  const size_t budget = n * static_cast<size_t>(cfg.rejection_budget);
  DataTable out;
  out.schema = schema;
  size_t attempts = 0, imputed_total = 0, over_threshold_total = 0;
  uint64_t wave = 0;
  while (out.rows.size() < n && attempts < budget) {
    size_t batch = std::min(n - out.rows.size(), budget - attempts);
    WaveOutcome outcome;
    outcome.rows.resize(batch);
    outcome.imputed.assign(batch, 0);
    outcome.over_threshold.assign(batch, false);
    parallel_for(batch, [&](size_t i) {
      Rng rng(derive_seed(cfg.seed, fnv1a("impute-wave") ^ wave, i));
      RowAttempt attempt = generate_row(gen, schema, cfg, rng);
      serial::ParsedRecord parsed = std::move(attempt.parsed);
      int needs = parsed.needs_fixing();
      if (needs > cfg.imputation_threshold) {
        outcome.over_threshold[i] = true;
        return;
      }
      // Fill missing or invalid fields one column at a time, schema order.
      for (size_t c = 0; c < schema.columns.size(); ++c) {
        if (parsed.state[c] == serial::FieldState::Valid) continue;
        std::string prompt = imputation_prompt(schema, parsed, schema.columns[c].name);
        std::string continuation = gen.generate(prompt, cfg.max_new_tokens, cfg.temperature, rng);
        if (!try_fill(schema, parsed, static_cast<int>(c), extract_value_text(continuation)))
          return;  // fill came back invalid: reject the attempt
        ++outcome.imputed[i];
      }
      if (parsed.fully_valid()) outcome.rows[i] = row_from_parsed(parsed);
    });
    for (size_t i = 0; i < batch; ++i) {
      over_threshold_total += outcome.over_threshold[i];
      if (outcome.rows[i] && out.rows.size() < n) {
        imputed_total += outcome.imputed[i];
        out.rows.push_back(std::move(*outcome.rows[i]));
      }
    }
    attempts += batch;
    ++wave;
  }
  auto t1 = std::chrono::steady_clock::now();
  if (report) {
    report->requested = n;
    report->accepted = out.rows.size();
    report->attempts = attempts;
    report->accept_rate =
        attempts ? static_cast<double>(out.rows.size()) / static_cast<double>(attempts) : 0.0;
    report->imputed_fields = imputed_total;
    report->rejected_over_threshold = over_threshold_total;
    report->seconds = std::chrono::duration<double>(t1 - t0).count();
    report->mode = "impute";
  }
  if (out.rows.size() < n)
    fail("budget", "imputation sampling accepted " + std::to_string(out.rows.size()) + " of " +
                       std::to_string(n) + " rows within " + std::to_string(budget) +
                       " attempts");
  return out;
}

DataTable sample(const TextGenerator& gen, const TableSchema& schema, size_t n,
                 const SamplingConfig& cfg, SampleReport* report) {
  return cfg.mode == SamplingConfig::Mode::Reject
             ? rejection_sample(gen, schema, n, cfg, report)
             : imputation_sample(gen, schema, n, cfg, report);
}

void check_schema_match(const pipeline::Checkpoint& ckpt, const TableSchema& schema) {
  require(ckpt.schema_fingerprint == schema.fingerprint(), "config",
          "checkpoint was trained against a different schema (fingerprint mismatch)");
}

std::string SampleReport::to_json() const {
  json j;
  j["mode"] = mode;
  j["requested"] = requested;
  j["accepted"] = accepted;
  j["attempts"] = attempts;
  j["accept_rate"] = accept_rate;
  j["imputed_fields"] = imputed_fields;
  j["rejected_over_threshold"] = rejected_over_threshold;
  j["seconds"] = seconds;
  return j.dump(2);
}

}  // namespace dptab::sampler
