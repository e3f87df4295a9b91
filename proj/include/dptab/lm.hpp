#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dptab/common.hpp"

namespace dptab::lm {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int context_length = 128;
  int vocab_size = 1024;
  double dropout = 0.0;  // kept at 0: per-example gradients must be deterministic

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Flat parameter vector with named block offsets. The layout is a pure
// function of the config, so checkpoints are just config + raw doubles.
struct ParamLayout {
  struct Layer {
    size_t ln1_g, ln1_b;
    size_t w_qkv, b_qkv;      // [3C x C], [3C]
    size_t w_attn, b_attn;    // [C x C], [C]
    size_t ln2_g, ln2_b;
    size_t w_fc, b_fc;        // [F x C], [F]
    size_t w_proj, b_proj;    // [C x F], [C]
  };
  size_t tok_emb = 0;  // [V x C]
  size_t pos_emb = 0;  // [T x C]
  std::vector<Layer> layers;
  size_t lnf_g = 0, lnf_b = 0;
  size_t w_out = 0;  // [V x C], no bias
  size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg);
};

struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> flat;

  static ModelParams init(const ModelConfig& cfg, Rng& rng);
  void check_finite() const;
};

enum class PosRole : uint8_t { Key = 0, Value = 1, NonFunctional = 2, Pad = 3 };

// Token-id matrix with next-token targets. role[e][t] is the role of the
// *target* token at position t; Pad positions carry no loss.
struct Batch {
  int n_examples = 0;
  int n_positions = 0;
  std::vector<int> input;     // [E x P]
  std::vector<int> target;    // [E x P]
  std::vector<PosRole> role;  // [E x P]

  size_t at(int e, int t) const { return static_cast<size_t>(e) * n_positions + t; }
  int tokens_in_example(int e) const;
  void validate(const ModelConfig& cfg) const;
};

// Per-position loss weights. Standard cross-entropy weights every role
// equally; the value-weighted loss puts lambda on value tokens and
// (1 - lambda) on key and non-functional tokens.
struct LossWeights {
  double value = 1.0;
  double other = 1.0;

  static LossWeights standard() { return {1.0, 1.0}; }
  static LossWeights value_weighted(double lambda);
  double of(PosRole r) const {
    return r == PosRole::Value ? value : (r == PosRole::Pad ? 0.0 : other);
  }
};

// Full-batch causal forward; logits indexed [e][t][v].
std::vector<double> forward(const ModelParams& params, const Batch& batch);

struct StandardLoss {
  double mean_nll = 0.0;               // over all non-pad tokens
  std::vector<double> per_token_nll;   // [E x P], 0 at pads
  long token_count = 0;
};

StandardLoss loss_standard(const std::vector<double>& logits, const Batch& batch);

// (lambda-weighted NLL sum) / (total non-pad token count); same normalizer
// as loss_standard so lambda shifts emphasis, not scale.
double loss_weighted(const std::vector<double>& logits, const Batch& batch, double lambda);

// Gradient of one example's own loss: (sum_t w_t nll_t) / N_e where N_e is
// that example's non-pad token count. Adds into `grad` (length layout.total)
// and returns the example loss.
double example_gradient(const ModelParams& params, const Batch& batch, int example,
                        const LossWeights& weights, std::span<double> grad);

// All per-example gradients, one flat vector each.
std::vector<std::vector<double>> backward_per_example(const ModelParams& params,
                                                      const Batch& batch,
                                                      const LossWeights& weights);

// Mean of per-example gradients (the batch training gradient); returns the
// mean per-example loss. Chunk-deterministic regardless of thread count.
double batch_gradient(const ModelParams& params, const Batch& batch, const LossWeights& weights,
                      std::span<double> grad);

std::vector<double> next_token_distribution(const ModelParams& params,
                                            const std::vector<int>& prefix, double temperature);

// Incremental decoder with a key/value cache; push() appends one token and
// returns the logits for the next position. Matches forward() bit for bit.
class Decoder {
 public:
  explicit Decoder(const ModelParams& params);
  void reset();
  int length() const { return length_; }
  const std::vector<double>& push(int token_id);

 private:
  const ModelParams& params_;
  int length_ = 0;
  std::vector<std::vector<double>> key_cache_, value_cache_;  // per layer [T x C]
  std::vector<double> logits_;
  std::vector<double> scratch_;
};

}  // namespace dptab::lm
