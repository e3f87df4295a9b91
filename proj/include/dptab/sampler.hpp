#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dptab/common.hpp"
#include "dptab/pipeline.hpp"
#include "dptab/serializer.hpp"
#include "dptab/tabular.hpp"

namespace dptab::sampler {

struct SamplingConfig {
  enum class Mode { Reject, Impute };
  Mode mode = Mode::Reject;
  int max_new_tokens = 100;
  double temperature = 1.0;
  int rejection_budget = 5;      // attempts per requested row, pooled
  int imputation_threshold = 15; // more fields needing repair than this rejects the row
  uint64_t seed = 0;

  void validate() const;
};

// Text-level generation interface. The checkpoint-backed implementation does
// ancestral sampling; tests drive the samplers with scripted stubs. Must be
// callable from multiple threads at once.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  // Continuation for `prompt` (prompt not included), stopping at EOS, at a
  // '.' terminator, or after max_new_tokens.
  virtual std::string generate(const std::string& prompt, int max_new_tokens, double temperature,
                               Rng& rng) const = 0;
};

class CheckpointGenerator : public TextGenerator {
 public:
  explicit CheckpointGenerator(const pipeline::Checkpoint& ckpt) : ckpt_(ckpt) {}
  std::string generate(const std::string& prompt, int max_new_tokens, double temperature,
                       Rng& rng) const override;

 private:
  const pipeline::Checkpoint& ckpt_;
};

struct RowAttempt {
  std::string text;  // prompt + continuation
  serial::ParsedRecord parsed;
};

// One conditioned generation: prompt "<target> is ", parsed through the
// template grammar. Never throws on bad model output.
RowAttempt generate_row(const TextGenerator& gen, const tabular::TableSchema& schema,
                        const SamplingConfig& cfg, Rng& rng);

struct SampleReport {
  size_t requested = 0;
  size_t accepted = 0;
  size_t attempts = 0;
  double accept_rate = 0.0;
  size_t imputed_fields = 0;           // impute mode
  size_t rejected_over_threshold = 0;  // impute mode
  double seconds = 0.0;
  std::string mode;

  std::string to_json() const;
};

// Keeps only fully valid generations until n rows are accepted; fails once
// the pooled attempt budget (n * rejection_budget) runs out.
tabular::DataTable rejection_sample(const TextGenerator& gen, const tabular::TableSchema& schema,
                                    size_t n, const SamplingConfig& cfg, SampleReport* report);

// Re-conditions on the valid fields of each generation and fills the missing
// or invalid columns one at a time; rows needing more than
// imputation_threshold repairs are rejected outright.
tabular::DataTable imputation_sample(const TextGenerator& gen, const tabular::TableSchema& schema,
                                     size_t n, const SamplingConfig& cfg, SampleReport* report);

tabular::DataTable sample(const TextGenerator& gen, const tabular::TableSchema& schema, size_t n,
                          const SamplingConfig& cfg, SampleReport* report);

// Guard used by the CLI: the checkpoint must have been trained against the
// schema it is asked to sample.
void check_schema_match(const pipeline::Checkpoint& ckpt, const tabular::TableSchema& schema);

}  // namespace dptab::sampler
