#include "dptab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dptab::pipeline {

using nlohmann::json;

EncodedExample encode_record(const serial::SerializedRecord& sr, const bpe::TokenizerModel& tok,
                             int context_length) {
  bpe::TokenStream stream = bpe::encode(tok, sr.text);
  auto roles = serial::tag_token_roles(sr, stream.offsets);
  const int k = static_cast<int>(stream.ids.size());
  require(k + 1 <= context_length, "domain",
          "serialized record needs " + std::to_string(k + 1) +
              " positions; raise context_length");
  EncodedExample ex;
  ex.input.reserve(k + 1);
  ex.target.reserve(k + 1);
  ex.role.reserve(k + 1);
  ex.input.push_back(bpe::TokenizerModel::kBos);
  for (int i = 0; i < k; ++i) ex.input.push_back(stream.ids[i]);
  for (int i = 0; i < k; ++i) {
    ex.target.push_back(stream.ids[i]);
    switch (roles[i]) {
      case serial::TokenRole::Key:
        ex.role.push_back(lm::PosRole::Key);
        break;
      case serial::TokenRole::Value:
        ex.role.push_back(lm::PosRole::Value);
        break;
      case serial::TokenRole::NonFunctional:
        ex.role.push_back(lm::PosRole::NonFunctional);
        break;
    }
  }
  ex.target.push_back(bpe::TokenizerModel::kEos);
  ex.role.push_back(lm::PosRole::NonFunctional);
  return ex;
}

lm::Batch make_batch(const std::vector<EncodedExample>& examples, int context_length) {
  require(!examples.empty(), "domain", "make_batch on empty example set");
  int max_len = 0;
  for (const auto& ex : examples) max_len = std::max(max_len, static_cast<int>(ex.input.size()));
  require(max_len <= context_length, "domain", "example longer than context_length");
  lm::Batch batch;
  batch.n_examples = static_cast<int>(examples.size());
  batch.n_positions = max_len;
  size_t n = static_cast<size_t>(batch.n_examples) * max_len;
  batch.input.assign(n, bpe::TokenizerModel::kPad);
  batch.target.assign(n, bpe::TokenizerModel::kPad);
  batch.role.assign(n, lm::PosRole::Pad);
  for (int e = 0; e < batch.n_examples; ++e) {
    const auto& ex = examples[e];
    for (size_t t = 0; t < ex.input.size(); ++t) {
      batch.input[batch.at(e, static_cast<int>(t))] = ex.input[t];
      batch.target[batch.at(e, static_cast<int>(t))] = ex.target[t];
      batch.role[batch.at(e, static_cast<int>(t))] = ex.role[t];
    }
  }
  return batch;
}

std::vector<lm::Batch> encode_table(const tabular::DataTable& table,
                                    const bpe::TokenizerModel& tok, int context_length,
                                    int batch_size) {
  require(batch_size >= 1, "domain", "batch_size must be positive");
  auto order = serial::fixed_order(table.schema);
  std::vector<lm::Batch> batches;
  std::vector<EncodedExample> group;
  for (const auto& row : table.rows) {
    group.push_back(encode_record(serial::serialize_record(row, table.schema, order), tok,
                                  context_length));
    if (static_cast<int>(group.size()) == batch_size) {
      batches.push_back(make_batch(group, context_length));
      group.clear();
    }
  }
  if (!group.empty()) batches.push_back(make_batch(group, context_length));
  return batches;
}

void StageConfig::validate() const {
  require(epochs >= 1, "config", "epochs must be positive");
  require(batch_size >= 1, "config", "batch_size must be positive");
  require(learning_rate > 0.0, "config", "learning_rate must be positive");
  require(lr_schedule == "linear" || lr_schedule == "constant", "config",
          "lr_schedule must be 'linear' or 'constant'");
  require(heldout_fraction >= 0.0 && heldout_fraction < 1.0, "config",
          "heldout_fraction must lie in [0,1)");
  if (lambda >= 0.0)
    require(lambda <= 1.0, "config", "lambda must lie in [0,1]");
}

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Stage1U:
      return "stage1-u";
    case Provenance::Stage1O:
      return "stage1-o";
    case Provenance::Stage2:
      return "stage2";
    case Provenance::DpStandard:
      return "dp-standard";
    case Provenance::NonDp:
      return "non-dp";
  }
  return "unknown";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "stage1-u") return Provenance::Stage1U;
  if (name == "stage1-o") return Provenance::Stage1O;
  if (name == "stage2") return Provenance::Stage2;
  if (name == "dp-standard") return Provenance::DpStandard;
  if (name == "non-dp") return Provenance::NonDp;
  fail("config", "unknown training regime '" + name + "'");
}

namespace {

constexpr char kMagic[8] = {'D', 'P', 'T', 'A', 'B', 'C', 'P', '1'};

json model_config_to_json(const lm::ModelConfig& cfg) {
  return json{{"n_layers", cfg.n_layers},     {"n_heads", cfg.n_heads},
              {"d_model", cfg.d_model},       {"d_ff", cfg.d_ff},
              {"context_length", cfg.context_length}, {"vocab_size", cfg.vocab_size}};
}

lm::ModelConfig model_config_from_json(const json& j) {
  lm::ModelConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.context_length = j.at("context_length").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.validate();
  return cfg;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail("io", "truncated checkpoint '" + path + "'");
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["model_config"] = model_config_to_json(ckpt.params.config);
  header["tokenizer"] = json::parse(ckpt.tokenizer.to_json());
  header["schema_fingerprint"] = ckpt.schema_fingerprint;
  header["provenance"] = provenance_name(ckpt.provenance);
  header["parent"] = ckpt.parent;
  header["n_train"] = ckpt.n_train;
  header["caveats"] = ckpt.caveats;
  if (ckpt.ledger) header["ledger"] = json::parse(ckpt.ledger->to_json());
  std::string header_text = header.dump();

  const auto* param_bytes = reinterpret_cast<const char*>(ckpt.params.flat.data());
  const size_t param_len = ckpt.params.flat.size() * sizeof(double);
  uint64_t checksum = fnv1a(header_text);
  checksum = fnv1a(param_bytes, param_len, checksum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io", "cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, 1);
  write_pod<uint64_t>(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  write_pod<uint64_t>(out, ckpt.params.flat.size());
  out.write(param_bytes, static_cast<std::streamsize>(param_len));
  write_pod<uint64_t>(out, checksum);
  if (!out) fail("io", "write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail("parse", "'" + path + "' is not a dptab checkpoint");
  uint32_t version = read_pod<uint32_t>(in, path);
  if (version != 1)
    fail("parse", "checkpoint version " + std::to_string(version) + " unsupported");
  uint64_t header_len = read_pod<uint64_t>(in, path);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail("io", "truncated checkpoint '" + path + "'");
  uint64_t n_params = read_pod<uint64_t>(in, path);
  std::vector<double> flat(n_params);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  if (!in) fail("io", "truncated checkpoint '" + path + "'");
  uint64_t stored_checksum = read_pod<uint64_t>(in, path);
  uint64_t checksum = fnv1a(header_text);
  checksum = fnv1a(flat.data(), n_params * sizeof(double), checksum);
  if (checksum != stored_checksum) fail("parse", "checkpoint '" + path + "' is corrupt");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const std::exception& e) {
    fail("parse", "checkpoint '" + path + "' has a bad header: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.params.config = model_config_from_json(header.at("model_config"));
  ckpt.params.layout = lm::ParamLayout::make(ckpt.params.config);
  require(ckpt.params.layout.total == n_params, "parse",
          "checkpoint parameter count does not match its model config");
  ckpt.params.flat = std::move(flat);
  ckpt.tokenizer = bpe::TokenizerModel::from_json(header.at("tokenizer").dump());
  ckpt.schema_fingerprint = header.at("schema_fingerprint").get<uint64_t>();
  ckpt.provenance = provenance_from_name(header.at("provenance").get<std::string>());
  ckpt.parent = header.at("parent").get<std::string>();
  ckpt.n_train = header.at("n_train").get<size_t>();
  ckpt.caveats = header.at("caveats").get<std::vector<std::string>>();
  if (header.contains("ledger"))
    ckpt.ledger = privacy::PrivacyLedger::from_json(header.at("ledger").dump());
  ckpt.id = header.value("id", "");
  if (ckpt.id.empty()) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(stored_checksum));
    ckpt.id = buf;
  }
  return ckpt;
}

namespace {

std::string checkpoint_id(const Checkpoint& ckpt) {
  uint64_t h = fnv1a(ckpt.params.flat.data(), ckpt.params.flat.size() * sizeof(double));
  h = fnv1a(provenance_name(ckpt.provenance), h);
  h = fnv1a(ckpt.parent, h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Serves encoded examples; re-serializes with a fresh column order per
// visit when column shuffling is on.
class ExampleProvider {
 public:
  ExampleProvider(const tabular::TableSchema& schema, std::vector<tabular::Row> rows,
                  const bpe::TokenizerModel& tok, int context_length, bool shuffle_columns,
                  uint64_t seed)
      : schema_(schema),
        rows_(std::move(rows)),
        tok_(tok),
        context_length_(context_length),
        shuffle_(shuffle_columns),
        seed_(seed) {
    if (!shuffle_) {
      auto order = serial::fixed_order(schema_);
      fixed_.reserve(rows_.size());
      for (const auto& row : rows_)
        fixed_.push_back(
            encode_record(serial::serialize_record(row, schema_, order), tok_, context_length_));
    }
  }

  size_t size() const { return rows_.size(); }

  EncodedExample get(size_t index, uint64_t visit) const {
    if (!shuffle_) return fixed_[index];
    Rng rng(derive_seed(seed_, fnv1a("column-order"), index * 0x10001ULL + visit));
    auto order = serial::make_order(schema_, true, rng);
    return encode_record(serial::serialize_record(rows_[index], schema_, order), tok_,
                         context_length_);
  }

 private:
  tabular::TableSchema schema_;
  std::vector<tabular::Row> rows_;
  const bpe::TokenizerModel& tok_;
  int context_length_;
  bool shuffle_;
  uint64_t seed_;
  std::vector<EncodedExample> fixed_;
};

double heldout_mean_nll(const lm::ModelParams& params, const std::vector<lm::Batch>& batches) {
  if (batches.empty()) return 0.0;
  double total = 0.0;
  long count = 0;
  for (const auto& batch : batches) {
    auto logits = lm::forward(params, batch);
    auto loss = lm::loss_standard(logits, batch);
    total += loss.mean_nll * static_cast<double>(loss.token_count);
    count += loss.token_count;
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

// Sum of clipped per-example gradients, deterministically chunked.
double clipped_gradient_sum(const lm::ModelParams& params, const lm::Batch& batch,
                            const lm::LossWeights& weights, double clip_norm,
                            std::span<double> grad_sum) {
  std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
  const size_t n_params = params.layout.total;
  constexpr int kChunk = 16;
  const int n_chunks = (batch.n_examples + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(n_chunks);
  std::vector<double> losses(n_chunks, 0.0);
  parallel_for(n_chunks, [&](size_t c) {
    partial[c].assign(n_params, 0.0);
    std::vector<double> scratch(n_params);
    int lo = static_cast<int>(c) * kChunk;
    int hi = std::min(batch.n_examples, lo + kChunk);
    for (int e = lo; e < hi; ++e) {
      std::fill(scratch.begin(), scratch.end(), 0.0);
      losses[c] += lm::example_gradient(params, batch, e, weights, scratch);
      dp::clip(scratch, clip_norm);
      for (size_t i = 0; i < n_params; ++i) partial[c][i] += scratch[i];
    }
  });
  double loss = 0.0;
  for (int c = 0; c < n_chunks; ++c) {
    loss += losses[c];
    for (size_t i = 0; i < n_params; ++i) grad_sum[i] += partial[c][i];
  }
  return loss / static_cast<double>(batch.n_examples);
}

struct SplitCorpus {
  std::vector<size_t> train_indices;
  std::vector<lm::Batch> heldout;
};

SplitCorpus split_heldout(const ExampleProvider& provider, const StageConfig& cfg,
                          int context_length) {
  SplitCorpus out;
  const size_t n = provider.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(cfg.seed, fnv1a("heldout-split")));
  rng.shuffle(idx);
  size_t n_heldout =
      std::min<size_t>(512, static_cast<size_t>(static_cast<double>(n) * cfg.heldout_fraction));
  if (n_heldout >= n) n_heldout = 0;
  out.train_indices.assign(idx.begin(), idx.end() - n_heldout);
  std::sort(out.train_indices.begin(), out.train_indices.end());
  std::vector<EncodedExample> held;
  for (size_t i = n - n_heldout; i < n; ++i) held.push_back(provider.get(idx[i], 0));
  for (size_t at = 0; at < held.size(); at += 64) {
    std::vector<EncodedExample> group(held.begin() + at,
                                      held.begin() + std::min(held.size(), at + 64));
    out.heldout.push_back(make_batch(group, context_length));
  }
  return out;
}

std::string build_manifest(const std::string& regime, const StageConfig& cfg,
                           const TrainReport& report, const dp::DPConfig* dp_cfg,
                           double seconds) {
  json j;
  j["regime"] = regime;
  j["checkpoint_id"] = report.checkpoint.id;
  j["parent"] = report.checkpoint.parent;
  j["steps"] = report.steps;
  j["config"] = {{"epochs", cfg.epochs},
                 {"batch_size", cfg.batch_size},
                 {"lambda", cfg.lambda},
                 {"shuffle_columns", cfg.shuffle_columns},
                 {"seed", cfg.seed},
                 {"learning_rate", cfg.learning_rate},
                 {"lr_schedule", cfg.lr_schedule}};
  j["model"] = model_config_to_json(report.checkpoint.params.config);
  j["initial_heldout_nll"] = report.initial_heldout_nll;
  j["epochs"] = json::array();
  for (const auto& e : report.epochs)
    j["epochs"].push_back({{"train_loss", e.train_loss}, {"heldout_nll", e.heldout_nll}});
  if (dp_cfg) {
    j["dp"] = {{"clip_norm", dp_cfg->clip_norm},
               {"noise_multiplier", dp_cfg->noise_multiplier},
               {"sample_rate", dp_cfg->sample_rate},
               {"delta", dp_cfg->delta},
               {"planned_steps", dp_cfg->planned_steps}};
    if (report.checkpoint.ledger) {
      auto eps = report.checkpoint.ledger->current_epsilon();
      j["epsilon"] = std::isfinite(eps.epsilon) ? json(eps.epsilon) : json("infinite");
      j["epsilon_alpha"] = eps.best_alpha;
    }
  }
  j["caveats"] = report.checkpoint.caveats;
  j["train_rows"] = report.checkpoint.n_train;
  j["seconds"] = seconds;
  return j.dump(2);
}

double scheduled_lr(const StageConfig& cfg, long step, long total_steps) {
  if (cfg.lr_schedule == "constant") return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps);
}

TrainReport run_non_private(lm::ModelParams params, const ExampleProvider& provider,
                            const StageConfig& cfg, Provenance provenance,
                            uint64_t schema_fingerprint, const bpe::TokenizerModel& tokenizer,
                            std::vector<std::string> caveats) {
  auto t0 = std::chrono::steady_clock::now();
  const int context = params.config.context_length;
  SplitCorpus split = split_heldout(provider, cfg, context);
  const size_t n = split.train_indices.size();
  require(n >= 1, "domain", "no training examples left after heldout split");

  TrainReport report;
  report.initial_heldout_nll = heldout_mean_nll(params, split.heldout);

  const long steps_per_epoch = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  const long total_steps = steps_per_epoch * cfg.epochs;
  dp::OptimizerState state =
      dp::OptimizerState::init(params.layout.total, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng data_rng(derive_seed(cfg.seed, fnv1a("data-order")));
  std::vector<double> grad(params.layout.total);
  lm::LossWeights weights = cfg.weights();

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order = split.train_indices;
    // A single full batch per epoch needs no data shuffling.
    if (order.size() > static_cast<size_t>(cfg.batch_size)) data_rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_batches = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<EncodedExample> group;
      for (size_t i = at; i < std::min(order.size(), at + cfg.batch_size); ++i)
        group.push_back(provider.get(order[i], static_cast<uint64_t>(epoch)));
      lm::Batch batch = make_batch(group, context);
      double loss = lm::batch_gradient(params, batch, weights, grad);
      dp::adam_step(params.flat, grad, state, scheduled_lr(cfg, step, total_steps));
      ++step;
      epoch_loss += loss;
      ++epoch_batches;
    }
    EpochStats stats;
    stats.train_loss = epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
    stats.heldout_nll = heldout_mean_nll(params, split.heldout);
    report.epochs.push_back(stats);
  }
  params.check_finite();

  report.steps = step;
  report.checkpoint.params = std::move(params);
  report.checkpoint.tokenizer = tokenizer;
  report.checkpoint.schema_fingerprint = schema_fingerprint;
  report.checkpoint.provenance = provenance;
  report.checkpoint.n_train = provider.size();
  report.checkpoint.caveats = std::move(caveats);
  report.checkpoint.id = checkpoint_id(report.checkpoint);
  auto t1 = std::chrono::steady_clock::now();
  report.manifest_json = build_manifest(provenance_name(provenance), cfg, report, nullptr,
                                        std::chrono::duration<double>(t1 - t0).count());
  return report;
}

TrainReport run_dp(lm::ModelParams params, const ExampleProvider& provider,
                   const StageConfig& cfg, const dp::DPConfig& dp_in, double target_epsilon,
                   double epsilon_ceiling, Provenance provenance, uint64_t schema_fingerprint,
                   const bpe::TokenizerModel& tokenizer, std::vector<std::string> caveats,
                   const std::string& parent_id) {
  auto t0 = std::chrono::steady_clock::now();
  const int context = params.config.context_length;
  SplitCorpus split = split_heldout(provider, cfg, context);
  const size_t n = split.train_indices.size();
  require(n >= 1, "domain", "no training examples left after heldout split");

  dp::DPConfig dp_cfg = dp_in;
  if (dp_cfg.sample_rate <= 0.0)
    dp_cfg.sample_rate = std::min(1.0, static_cast<double>(cfg.batch_size) / static_cast<double>(n));
  const long steps_per_epoch =
      std::max<long>(1, std::lround(1.0 / dp_cfg.sample_rate));
  const long total_steps = steps_per_epoch * cfg.epochs;
  dp_cfg.planned_steps = total_steps;
  if (dp_cfg.noise_multiplier <= 0.0 && target_epsilon > 0.0)
    dp_cfg.noise_multiplier =
        privacy::calibrate_sigma(dp_cfg.sample_rate, total_steps, dp_cfg.delta, target_epsilon);
  dp_cfg.validate();

  TrainReport report;
  report.initial_heldout_nll = heldout_mean_nll(params, split.heldout);

  privacy::PrivacyLedger ledger(dp_cfg.sample_rate, dp_cfg.noise_multiplier, dp_cfg.delta);
  for (const auto& c : caveats) ledger.add_caveat(c);

  dp::OptimizerState state =
      dp::OptimizerState::init(params.layout.total, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng sample_rng(derive_seed(cfg.seed, fnv1a("poisson")));
  Rng noise_rng(derive_seed(cfg.seed, fnv1a("gaussian-noise")));
  std::vector<double> grad_sum(params.layout.total);
  lm::LossWeights weights = cfg.weights();

  auto partial_checkpoint = [&](long steps_taken) {
    Checkpoint partial;
    partial.params = params;
    partial.tokenizer = tokenizer;
    partial.schema_fingerprint = schema_fingerprint;
    partial.provenance = provenance;
    partial.parent = parent_id;
    partial.n_train = n;
    partial.ledger = ledger;
    partial.caveats = caveats;
    partial.caveats.push_back("training halted after " + std::to_string(steps_taken) +
                              " of " + std::to_string(total_steps) + " steps: budget exhausted");
    partial.id = checkpoint_id(partial);
    return partial;
  };

  double epoch_loss = 0.0;
  long epoch_batches = 0;
  for (long step = 0; step < total_steps; ++step) {
    auto picked = dp::poisson_sample(n, dp_cfg.sample_rate, sample_rng);
    if (!picked.empty()) {
      std::vector<EncodedExample> group;
      group.reserve(picked.size());
      for (size_t i : picked)
        group.push_back(provider.get(split.train_indices[i], static_cast<uint64_t>(step)));
      lm::Batch batch = make_batch(group, context);
      epoch_loss += clipped_gradient_sum(params, batch, weights, dp_cfg.clip_norm, grad_sum);
      ++epoch_batches;
    } else {
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);  // noise-only step
    }
    dp::noisy_step(params.flat, grad_sum, n, dp_cfg, state, noise_rng,
                   scheduled_lr(cfg, step, total_steps));
    ledger.step();
    if (epsilon_ceiling > 0.0) {
      auto eps = ledger.current_epsilon();
      if (!(eps.epsilon <= epsilon_ceiling))
        throw BudgetExhausted(
            "privacy budget exhausted at step " + std::to_string(step + 1) + ": epsilon " +
                std::to_string(eps.epsilon) + " exceeds ceiling " +
                std::to_string(epsilon_ceiling),
            partial_checkpoint(step + 1));
    }
    if ((step + 1) % steps_per_epoch == 0 || step + 1 == total_steps) {
      EpochStats stats;
      stats.train_loss = epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
      stats.heldout_nll = heldout_mean_nll(params, split.heldout);
      report.epochs.push_back(stats);
      epoch_loss = 0.0;
      epoch_batches = 0;
    }
  }
  params.check_finite();

  report.steps = total_steps;
  report.checkpoint.params = std::move(params);
  report.checkpoint.tokenizer = tokenizer;
  report.checkpoint.schema_fingerprint = schema_fingerprint;
  report.checkpoint.provenance = provenance;
  report.checkpoint.parent = parent_id;
  report.checkpoint.n_train = provider.size();
  report.checkpoint.ledger = std::move(ledger);
  report.checkpoint.caveats = std::move(caveats);
  report.checkpoint.id = checkpoint_id(report.checkpoint);
  auto t1 = std::chrono::steady_clock::now();
  report.manifest_json = build_manifest(provenance_name(provenance), cfg, report, &dp_cfg,
                                        std::chrono::duration<double>(t1 - t0).count());
  return report;
}

}  // namespace

TrainReport train_stage1(const lm::ModelConfig& model_cfg, const pseudo::Corpus& corpus,
                         const StageConfig& cfg) {
  cfg.validate();
  model_cfg.validate();
  require(!corpus.rows().empty(), "domain", "stage-1 corpus is empty");

  // The tokenizer sees pseudo text only.
  auto order = serial::fixed_order(corpus.schema());
  std::vector<std::string> lines;
  lines.reserve(corpus.rows().size());
  for (const auto& row : corpus.rows())
    lines.push_back(serial::serialize_record(row, corpus.schema(), order).text);
  bpe::TokenizerModel tokenizer = bpe::train_bpe(lines, model_cfg.vocab_size);

  Rng init_rng(derive_seed(cfg.seed, fnv1a("model-init")));
  lm::ModelParams params = lm::ModelParams::init(model_cfg, init_rng);

  ExampleProvider provider(corpus.schema(), corpus.rows(), tokenizer, model_cfg.context_length,
                           cfg.shuffle_columns, cfg.seed);
  return run_non_private(std::move(params), provider, cfg,
                         corpus.from_public() ? Provenance::Stage1O : Provenance::Stage1U,
                         corpus.schema().fingerprint(), tokenizer, corpus.caveats());
}

TrainReport train_stage2(const Checkpoint& parent, const tabular::DataTable& private_table,
                         const StageConfig& cfg, const dp::DPConfig& dp_cfg,
                         double target_epsilon, double epsilon_ceiling) {
  cfg.validate();
  require(parent.provenance == Provenance::Stage1U || parent.provenance == Provenance::Stage1O,
          "config", "stage-2 training requires a stage-1 parent checkpoint");
  require(private_table.n_rows() > 0, "domain", "private table is empty");

  ExampleProvider provider(private_table.schema, private_table.rows, parent.tokenizer,
                           parent.params.config.context_length, cfg.shuffle_columns, cfg.seed);
  return run_dp(parent.params, provider, cfg, dp_cfg, target_epsilon, epsilon_ceiling,
                Provenance::Stage2, private_table.schema.fingerprint(), parent.tokenizer,
                parent.caveats, parent.id);
}

TrainReport train_dp_standard(const lm::ModelConfig& model_cfg,
                              const bpe::TokenizerModel& tokenizer,
                              const std::vector<std::string>& tokenizer_caveats,
                              const tabular::DataTable& private_table, const StageConfig& cfg,
                              const dp::DPConfig& dp_cfg, double target_epsilon,
                              double epsilon_ceiling) {
  cfg.validate();
  model_cfg.validate();
  require(private_table.n_rows() > 0, "domain", "private table is empty");
  require(tokenizer.vocab_size() <= model_cfg.vocab_size, "config",
          "tokenizer vocabulary exceeds model vocab_size");

  Rng init_rng(derive_seed(cfg.seed, fnv1a("model-init")));
  lm::ModelParams params = lm::ModelParams::init(model_cfg, init_rng);
  ExampleProvider provider(private_table.schema, private_table.rows, tokenizer,
                           model_cfg.context_length, cfg.shuffle_columns, cfg.seed);
  return run_dp(std::move(params), provider, cfg, dp_cfg, target_epsilon, epsilon_ceiling,
                Provenance::DpStandard, private_table.schema.fingerprint(), tokenizer,
                tokenizer_caveats, "");
}

TrainReport train_non_dp(const lm::ModelConfig& model_cfg, const bpe::TokenizerModel& tokenizer,
                         const tabular::DataTable& private_table, const StageConfig& cfg) {
  cfg.validate();
  model_cfg.validate();
  require(private_table.n_rows() > 0, "domain", "private table is empty");
  require(tokenizer.vocab_size() <= model_cfg.vocab_size, "config",
          "tokenizer vocabulary exceeds model vocab_size");

  Rng init_rng(derive_seed(cfg.seed, fnv1a("model-init")));
  lm::ModelParams params = lm::ModelParams::init(model_cfg, init_rng);
  ExampleProvider provider(private_table.schema, private_table.rows, tokenizer,
                           model_cfg.context_length, cfg.shuffle_columns, cfg.seed);
  return run_non_private(std::move(params), provider, cfg, Provenance::NonDp,
                         private_table.schema.fingerprint(), tokenizer, {});
}

}  // namespace dptab::pipeline
