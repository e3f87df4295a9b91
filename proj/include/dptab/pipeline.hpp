#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dptab/accountant.hpp"
#include "dptab/common.hpp"
#include "dptab/dp.hpp"
#include "dptab/lm.hpp"
#include "dptab/pseudo.hpp"
#include "dptab/serializer.hpp"
#include "dptab/tabular.hpp"
#include "dptab/tokenizer.hpp"

namespace dptab::pipeline {

// One record, tokenized for training: input ids start with BOS, targets are
// the inputs shifted left with EOS appended, roles describe each target.
struct EncodedExample {
  std::vector<int> input;
  std::vector<int> target;
  std::vector<lm::PosRole> role;
};

EncodedExample encode_record(const serial::SerializedRecord& sr, const bpe::TokenizerModel& tok,
                             int context_length);

lm::Batch make_batch(const std::vector<EncodedExample>& examples, int context_length);

// Serializes and tokenizes whole tables (fixed target-first order).
std::vector<lm::Batch> encode_table(const tabular::DataTable& table,
                                    const bpe::TokenizerModel& tok, int context_length,
                                    int batch_size);

struct StageConfig {
  int epochs = 5;
  int batch_size = 32;          // expected batch size under Poisson sampling
  double lambda = -1.0;         // < 0 selects the unweighted loss
  bool shuffle_columns = false;
  uint64_t seed = 1;
  double learning_rate = 1e-3;
  std::string lr_schedule = "linear";  // "linear" decay to 0 or "constant"
  double heldout_fraction = 0.1;

  void validate() const;
  lm::LossWeights weights() const {
    return lambda < 0.0 ? lm::LossWeights::standard() : lm::LossWeights::value_weighted(lambda);
  }
};

enum class Provenance { Stage1U, Stage1O, Stage2, DpStandard, NonDp };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct Checkpoint {
  lm::ModelParams params;
  bpe::TokenizerModel tokenizer;
  uint64_t schema_fingerprint = 0;
  Provenance provenance = Provenance::Stage1U;
  std::string id;      // content hash, assigned on save/train
  std::string parent;  // stage-1 parent id for stage-2 checkpoints
  size_t n_train = 0;  // rows the model was trained on (default sampling size)
  std::optional<privacy::PrivacyLedger> ledger;
  std::vector<std::string> caveats;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Thrown when the ledger passes the configured epsilon ceiling mid-run; the
// partially trained model rides along so callers can persist it clearly
// marked.
class BudgetExhausted : public Error {
 public:
  BudgetExhausted(const std::string& message, Checkpoint partial)
      : Error("budget", message), partial_(std::move(partial)) {}
  const Checkpoint& partial() const { return partial_; }

 private:
  Checkpoint partial_;
};

struct EpochStats {
  double train_loss = 0.0;
  double heldout_nll = 0.0;
};

struct TrainReport {
  Checkpoint checkpoint;
  std::vector<EpochStats> epochs;
  double initial_heldout_nll = 0.0;
  long steps = 0;
  std::string manifest_json;
};

// Stage 1: non-private Adam on the pseudo corpus. The tokenizer is trained
// here, on pseudo text only. Takes pseudo::Corpus by type so a private
// DataTable can never reach this path.
TrainReport train_stage1(const lm::ModelConfig& model_cfg, const pseudo::Corpus& corpus,
                         const StageConfig& cfg);

// Stage 2: DP-Adam fine-tuning of a stage-1 checkpoint on the private table,
// with the value-weighted loss. The parent's tokenizer is reused, never
// retrained. When target_epsilon > 0 and no noise multiplier is set, sigma
// is calibrated against the run's (q, T, delta). epsilon_ceiling > 0 halts
// training when the ledger passes it.
TrainReport train_stage2(const Checkpoint& parent, const tabular::DataTable& private_table,
                         const StageConfig& cfg, const dp::DPConfig& dp_cfg,
                         double target_epsilon = 0.0, double epsilon_ceiling = 0.0);

// Direct DP fine-tuning from fresh initialization (no stage-1 parent). The
// tokenizer must be supplied; it has to come from non-private text.
TrainReport train_dp_standard(const lm::ModelConfig& model_cfg,
                              const bpe::TokenizerModel& tokenizer,
                              const std::vector<std::string>& tokenizer_caveats,
                              const tabular::DataTable& private_table, const StageConfig& cfg,
                              const dp::DPConfig& dp_cfg, double target_epsilon = 0.0,
                              double epsilon_ceiling = 0.0);

// Non-private fine-tuning on the private table (the no-privacy baseline).
TrainReport train_non_dp(const lm::ModelConfig& model_cfg, const bpe::TokenizerModel& tokenizer,
                         const tabular::DataTable& private_table, const StageConfig& cfg);

}  // namespace dptab::pipeline
