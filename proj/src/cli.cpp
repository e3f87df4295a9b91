#include "dptab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dptab/accountant.hpp"
#include "dptab/metrics.hpp"
#include "dptab/pipeline.hpp"
#include "dptab/sampler.hpp"

namespace dptab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where,
                const std::vector<std::string>& allowed) {
  if (!obj.is_object()) fail("config", where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed) ok = ok || (key == a);
    if (!ok) fail("config", "unknown config key '" + where + "." + key + "'");
  }
}

struct StageDefaults {
  int epochs;
  int batch_size;
  double lambda;
};

pipeline::StageConfig stage_config(const json& cfg, const std::string& section,
                                   const StageDefaults& defaults) {
  pipeline::StageConfig sc;
  sc.epochs = defaults.epochs;
  sc.batch_size = defaults.batch_size;
  sc.lambda = defaults.lambda;
  if (!cfg.contains(section)) return sc;
  const json& j = cfg.at(section);
  check_keys(j, section,
             {"epochs", "batch_size", "lambda", "shuffle_columns", "seed", "learning_rate",
              "lr_schedule", "heldout_fraction", "pseudo_rows"});
  sc.epochs = j.value("epochs", sc.epochs);
  sc.batch_size = j.value("batch_size", sc.batch_size);
  sc.lambda = j.value("lambda", sc.lambda);
  sc.shuffle_columns = j.value("shuffle_columns", sc.shuffle_columns);
  sc.seed = j.value("seed", sc.seed);
  sc.learning_rate = j.value("learning_rate", sc.learning_rate);
  sc.lr_schedule = j.value("lr_schedule", sc.lr_schedule);
  sc.heldout_fraction = j.value("heldout_fraction", sc.heldout_fraction);
  return sc;
}

struct Config {
  json raw;
  fs::path config_dir;

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open config '" + path + "'");
    Config cfg;
    try {
      in >> cfg.raw;
    } catch (const std::exception& e) {
      fail("parse", "bad config JSON in '" + path + "': " + e.what());
    }
    cfg.config_dir = fs::path(path).parent_path();
    cfg.validate();
    return cfg;
  }

  void validate() const {
    check_keys(raw, "config",
               {"paths", "data", "model", "stage1", "stage2", "dp_standard", "non_dp", "dp",
                "sampling", "metrics"});
    if (raw.contains("paths"))
      check_keys(raw.at("paths"), "paths",
                 {"private_csv", "public_csv", "output_dir", "stage1_checkpoint",
                  "tokenizer_from"});
    if (raw.contains("data"))
      check_keys(raw.at("data"), "data",
                 {"target_column", "public_target_column", "train_fraction", "split_seed",
                  "kind_overrides"});
    if (raw.contains("model"))
      check_keys(raw.at("model"), "model",
                 {"n_layers", "n_heads", "d_model", "d_ff", "context_length", "vocab_size"});
    if (raw.contains("dp"))
      check_keys(raw.at("dp"), "dp",
                 {"clip_norm", "delta", "noise_multiplier", "sample_rate", "target_epsilon",
                  "epsilon_ceiling"});
    if (raw.contains("sampling"))
      check_keys(raw.at("sampling"), "sampling",
                 {"n", "mode", "temperature", "max_new_tokens", "rejection_budget",
                  "imputation_threshold", "seed"});
    if (raw.contains("metrics")) check_keys(raw.at("metrics"), "metrics", {"bins", "seed"});
    // Stage sections are validated on use (they share one key set).
    stage_config(raw, "stage1", {5, 32, -1.0});
    stage_config(raw, "stage2", {10, 64, 0.65});
    stage_config(raw, "dp_standard", {10, 64, 0.33});
    stage_config(raw, "non_dp", {10, 32, -1.0});
  }

  std::string path_str(const std::string& key, const std::string& fallback = "") const {
    if (!raw.contains("paths") || !raw.at("paths").contains(key)) return fallback;
    std::string p = raw.at("paths").at(key).get<std::string>();
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (config_dir / p).string();
  }

  fs::path output_dir() const {
    std::string dir = "out";
    if (raw.contains("paths") && raw.at("paths").contains("output_dir"))
      dir = raw.at("paths").at("output_dir").get<std::string>();
    if (const char* root = std::getenv("DPTAB_OUTPUT_ROOT")) {
      if (!fs::path(dir).is_absolute()) return fs::path(root) / dir;
    }
    if (!fs::path(dir).is_absolute() && !config_dir.empty()) return config_dir / dir;
    return dir;
  }

  json section(const std::string& name) const {
    return raw.contains(name) ? raw.at(name) : json::object();
  }

  lm::ModelConfig model_config() const {
    lm::ModelConfig mc;
    json m = section("model");
    mc.n_layers = m.value("n_layers", mc.n_layers);
    mc.n_heads = m.value("n_heads", mc.n_heads);
    mc.d_model = m.value("d_model", mc.d_model);
    mc.d_ff = m.value("d_ff", mc.d_ff);
    mc.context_length = m.value("context_length", mc.context_length);
    mc.vocab_size = m.value("vocab_size", mc.vocab_size);
    mc.validate();
    return mc;
  }

  std::map<std::string, tabular::ColumnKind> kind_overrides() const {
    std::map<std::string, tabular::ColumnKind> out;
    json d = section("data");
    if (!d.contains("kind_overrides")) return out;
    for (const auto& [name, kind] : d.at("kind_overrides").items()) {
      std::string k = kind.get<std::string>();
      if (k == "numeric")
        out[name] = tabular::ColumnKind::Numeric;
      else if (k == "categorical")
        out[name] = tabular::ColumnKind::Categorical;
      else
        fail("config", "kind_overrides." + name + " must be 'numeric' or 'categorical'");
    }
    return out;
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io", "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail("io", "write failed for '" + path.string() + "'");
}

tabular::TableSchema load_prepared_schema(const fs::path& outdir) {
  fs::path schema_path = outdir / "schema.json";
  if (!fs::exists(schema_path))
    fail("config", "missing '" + schema_path.string() + "'; run 'prepare' first");
  return tabular::schema_from_json(read_file(schema_path));
}

tabular::DataTable load_prepared_train(const fs::path& outdir) {
  auto schema = load_prepared_schema(outdir);
  fs::path train_path = outdir / "train.csv";
  if (!fs::exists(train_path))
    fail("config", "missing '" + train_path.string() + "'; run 'prepare' first");
  return tabular::load_csv_with_schema(train_path.string(), schema);
}

int cmd_prepare(const Config& cfg) {
  std::string private_csv = cfg.path_str("private_csv");
  require(!private_csv.empty(), "config", "paths.private_csv is required for prepare");
  json data = cfg.section("data");
  std::string target = data.value("target_column", "");
  require(!target.empty(), "config", "data.target_column is required for prepare");
  double fraction = data.value("train_fraction", 0.8);
  uint64_t split_seed = data.value("split_seed", 1ULL);

  tabular::DataTable table = tabular::load_csv(private_csv, cfg.kind_overrides(), target);
  auto [train, test] = tabular::split(table, fraction, split_seed);

  fs::path outdir = cfg.output_dir();
  fs::create_directories(outdir);
  tabular::write_csv(train, (outdir / "train.csv").string());
  tabular::write_csv(test, (outdir / "test.csv").string());
  write_file(outdir / "schema.json", tabular::schema_to_json(table.schema));

  json summary;
  summary["rows_after_dedup"] = table.n_rows();
  summary["train_rows"] = train.n_rows();
  summary["test_rows"] = test.n_rows();
  int numeric = 0, categorical = 0;
  for (const auto& c : table.schema.columns) (c.is_numeric() ? numeric : categorical) += 1;
  summary["numeric_columns"] = numeric;
  summary["categorical_columns"] = categorical;
  summary["class_ratio"] = tabular::class_ratio(train);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct TrainFlags {
  std::string regime;
  std::string parent;
  std::string tokenizer_from;
  std::string output;
  int epochs = -1;
  double lambda = -2.0;
  double target_epsilon = -1.0;
  double noise_multiplier = -1.0;
  double learning_rate = -1.0;
  int batch_size = -1;
  long seed = -1;
  int shuffle = -1;  // -1 unset, 0 off, 1 on
};

dp::DPConfig dp_config(const Config& cfg) {
  dp::DPConfig dp_cfg;
  json d = cfg.section("dp");
  dp_cfg.clip_norm = d.value("clip_norm", 1.0);
  dp_cfg.delta = d.value("delta", 1e-5);
  dp_cfg.noise_multiplier = d.value("noise_multiplier", 0.0);
  dp_cfg.sample_rate = d.value("sample_rate", 0.0);
  return dp_cfg;
}

// Tokenizer for regimes with no stage-1 parent. Either reuse one from an
// existing checkpoint or fit one on uniform pseudo text drawn from the
// private schema statistics (caveat attached).
std::pair<bpe::TokenizerModel, std::vector<std::string>> standalone_tokenizer(
    const Config& cfg, const TrainFlags& flags, const tabular::DataTable& train,
    const lm::ModelConfig& model_cfg, uint64_t seed) {
  std::string from = !flags.tokenizer_from.empty() ? flags.tokenizer_from
                                                   : cfg.path_str("tokenizer_from");
  if (!from.empty()) {
    pipeline::Checkpoint source = pipeline::load_checkpoint(from);
    return {source.tokenizer, source.caveats};
  }
  pseudo::PseudoStats stats = pseudo::extract_stats(train);
  Rng rng(derive_seed(seed, fnv1a("tokenizer-pseudo")));
  pseudo::Corpus corpus = pseudo::uniform_corpus(stats, train.n_rows(), rng);
  auto order = serial::fixed_order(corpus.schema());
  std::vector<std::string> lines;
  lines.reserve(corpus.rows().size());
  for (const auto& row : corpus.rows())
    lines.push_back(serial::serialize_record(row, corpus.schema(), order).text);
  return {bpe::train_bpe(lines, model_cfg.vocab_size), corpus.caveats()};
}

int cmd_train(const Config& cfg, const TrainFlags& flags) {
  fs::path outdir = cfg.output_dir();
  fs::create_directories(outdir);
  lm::ModelConfig model_cfg = cfg.model_config();
  pipeline::Provenance regime = pipeline::provenance_from_name(flags.regime);

  std::string section;
  StageDefaults defaults{5, 32, -1.0};
  switch (regime) {
    case pipeline::Provenance::Stage1U:
    case pipeline::Provenance::Stage1O:
      section = "stage1";
      defaults = {5, 32, -1.0};
      break;
    case pipeline::Provenance::Stage2:
      section = "stage2";
      defaults = {10, 64, 0.65};
      break;
    case pipeline::Provenance::DpStandard:
      section = "dp_standard";
      defaults = {10, 64, 0.33};
      break;
    case pipeline::Provenance::NonDp:
      section = "non_dp";
      defaults = {10, 32, -1.0};
      break;
  }
  pipeline::StageConfig stage = stage_config(cfg.raw, section, defaults);
  if (flags.epochs > 0) stage.epochs = flags.epochs;
  if (flags.lambda >= -1.0) stage.lambda = flags.lambda;
  if (flags.learning_rate > 0) stage.learning_rate = flags.learning_rate;
  if (flags.batch_size > 0) stage.batch_size = flags.batch_size;
  if (flags.seed >= 0) stage.seed = static_cast<uint64_t>(flags.seed);
  if (flags.shuffle >= 0) stage.shuffle_columns = flags.shuffle == 1;

  dp::DPConfig dp_cfg = dp_config(cfg);
  json dp_json = cfg.section("dp");
  double target_epsilon = dp_json.value("target_epsilon", 0.0);
  double epsilon_ceiling = dp_json.value("epsilon_ceiling", 0.0);
  if (flags.target_epsilon >= 0) target_epsilon = flags.target_epsilon;
  if (flags.noise_multiplier >= 0) dp_cfg.noise_multiplier = flags.noise_multiplier;

  pipeline::TrainReport report;
  switch (regime) {
    case pipeline::Provenance::Stage1U: {
      tabular::DataTable train = load_prepared_train(outdir);
      pseudo::PseudoStats stats = pseudo::extract_stats(train);
      json s1 = cfg.section("stage1");
      size_t pseudo_rows = s1.value("pseudo_rows", 0ULL);
      if (pseudo_rows == 0) pseudo_rows = train.n_rows();
      Rng rng(derive_seed(stage.seed, fnv1a("pseudo-data")));
      pseudo::Corpus corpus = pseudo::uniform_corpus(stats, pseudo_rows, rng);
      report = pipeline::train_stage1(model_cfg, corpus, stage);
      break;
    }
    case pipeline::Provenance::Stage1O: {
      std::string public_csv = cfg.path_str("public_csv");
      require(!public_csv.empty(), "config", "paths.public_csv is required for stage1-o");
      std::string public_target = cfg.section("data").value("public_target_column", "");
      tabular::DataTable public_table = tabular::load_csv(public_csv, {}, public_target);
      report = pipeline::train_stage1(model_cfg, pseudo::public_corpus(public_table), stage);
      break;
    }
    case pipeline::Provenance::Stage2: {
      std::string parent_path = !flags.parent.empty()
                                    ? flags.parent
                                    : cfg.path_str("stage1_checkpoint");
      require(!parent_path.empty(), "config",
              "stage2 requires a stage-1 checkpoint (--parent or paths.stage1_checkpoint)");
      if (!fs::exists(parent_path))
        fail("config", "stage-1 checkpoint '" + parent_path + "' does not exist");
      pipeline::Checkpoint parent = pipeline::load_checkpoint(parent_path);
      tabular::DataTable train = load_prepared_train(outdir);
      report = pipeline::train_stage2(parent, train, stage, dp_cfg, target_epsilon,
                                      epsilon_ceiling);
      break;
    }
    case pipeline::Provenance::DpStandard: {
      tabular::DataTable train = load_prepared_train(outdir);
      auto [tokenizer, caveats] =
          standalone_tokenizer(cfg, flags, train, model_cfg, stage.seed);
      report = pipeline::train_dp_standard(model_cfg, tokenizer, caveats, train, stage, dp_cfg,
                                           target_epsilon, epsilon_ceiling);
      break;
    }
    case pipeline::Provenance::NonDp: {
      tabular::DataTable train = load_prepared_train(outdir);
      auto [tokenizer, caveats] =
          standalone_tokenizer(cfg, flags, train, model_cfg, stage.seed);
      (void)caveats;  // non-private training: nothing for a ledger to carry
      report = pipeline::train_non_dp(model_cfg, tokenizer, train, stage);
      break;
    }
  }

  fs::path ckpt_path = flags.output.empty() ? outdir / (flags.regime + ".ckpt")
                                            : fs::path(flags.output);
  pipeline::save_checkpoint(report.checkpoint, ckpt_path.string());
  write_file(outdir / (flags.regime + ".manifest.json"), report.manifest_json);
  if (report.checkpoint.ledger)
    write_file(outdir / (flags.regime + ".ledger.json"), report.checkpoint.ledger->to_json());
  json done;
  done["checkpoint"] = ckpt_path.string();
  done["checkpoint_id"] = report.checkpoint.id;
  done["steps"] = report.steps;
  if (report.checkpoint.ledger) {
    auto eps = report.checkpoint.ledger->current_epsilon();
    done["epsilon"] = std::isfinite(eps.epsilon) ? json(eps.epsilon) : json("infinite");
  }
  std::cout << done.dump(2) << "\n";
  return 0;
}

int cmd_sample(const Config& cfg, const std::string& checkpoint_path, long n_flag,
               const std::string& mode_flag, long seed_flag, const std::string& output) {
  fs::path outdir = cfg.output_dir();
  fs::create_directories(outdir);
  tabular::TableSchema schema = load_prepared_schema(outdir);
  pipeline::Checkpoint ckpt = pipeline::load_checkpoint(checkpoint_path);
  sampler::check_schema_match(ckpt, schema);

  sampler::SamplingConfig sc;
  json s = cfg.section("sampling");
  std::string mode = !mode_flag.empty() ? mode_flag : s.value("mode", "reject");
  if (mode == "reject")
    sc.mode = sampler::SamplingConfig::Mode::Reject;
  else if (mode == "impute")
    sc.mode = sampler::SamplingConfig::Mode::Impute;
  else
    fail("config", "sampling mode must be 'reject' or 'impute'");
  sc.temperature = s.value("temperature", 1.0);
  sc.max_new_tokens = s.value("max_new_tokens", 100);
  sc.rejection_budget = s.value("rejection_budget", 5);
  sc.imputation_threshold = s.value("imputation_threshold", 15);
  sc.seed = s.value("seed", 0ULL);
  if (seed_flag >= 0) sc.seed = static_cast<uint64_t>(seed_flag);
  size_t n = n_flag > 0 ? static_cast<size_t>(n_flag) : s.value("n", 0ULL);
  if (n == 0) n = ckpt.n_train;
  require(n > 0, "config", "sample size is zero and the checkpoint records no train size");

  sampler::CheckpointGenerator gen(ckpt);
  sampler::SampleReport report;
  tabular::DataTable synth = sampler::sample(gen, schema, n, sc, &report);
  fs::path synth_path = output.empty() ? outdir / "synthetic.csv" : fs::path(output);
  tabular::write_csv(synth, synth_path.string());
  write_file(outdir / "sampling_report.json", report.to_json());
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& real_path,
             const std::vector<std::string>& synth_paths, const std::string& checkpoint_path,
             const std::string& output) {
  require(!synth_paths.empty(), "config", "at least one --synthetic CSV is required");
  fs::path outdir = cfg.output_dir();
  fs::create_directories(outdir);

  json mj = cfg.section("metrics");
  std::vector<int> bins = mj.value("bins", std::vector<int>{20, 50});
  uint64_t seed = mj.value("seed", 0ULL);

  // Kinds and target come from the prepared schema when available so
  // all-numeric-looking categorical columns stay categorical.
  std::map<std::string, tabular::ColumnKind> overrides = cfg.kind_overrides();
  std::string target = cfg.section("data").value("target_column", "");
  fs::path schema_path = outdir / "schema.json";
  if (fs::exists(schema_path)) {
    auto schema = tabular::schema_from_json(read_file(schema_path));
    target = schema.target_column;
    for (const auto& c : schema.columns) overrides[c.name] = c.kind;
  }

  tabular::DataTable real = tabular::load_csv(real_path, overrides, target, /*dedup=*/true);
  json out;
  out["real"] = real_path;
  out["sets"] = json::array();
  std::vector<metrics::MetricsReport> reports;
  for (const auto& sp : synth_paths) {
    tabular::DataTable synth = tabular::load_csv(sp, overrides, target, /*dedup=*/false);
    metrics::MetricsReport r = metrics::evaluate(real, synth, bins, seed);
    reports.push_back(r);
    json item = json::parse(r.to_json());
    item["synthetic"] = sp;
    out["sets"].push_back(item);
  }

  if (!checkpoint_path.empty()) {
    pipeline::Checkpoint ckpt = pipeline::load_checkpoint(checkpoint_path);
    auto batches = pipeline::encode_table(real, ckpt.tokenizer,
                                          ckpt.params.config.context_length, 64);
    auto ppl = metrics::perplexity_breakdown(ckpt.params, batches);
    out["perplexity"] = {{"total", ppl.total},
                         {"key", ppl.key},
                         {"value", ppl.value},
                         {"non_functional", ppl.non_functional},
                         {"checkpoint", checkpoint_path}};
  }

  if (reports.size() > 1) {
    auto mean_std = [](const std::vector<double>& xs) {
      double m = 0.0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      double v = 0.0;
      for (double x : xs) v += (x - m) * (x - m);
      v /= static_cast<double>(xs.size());
      return json{{"mean", m}, {"std", std::sqrt(v)}};
    };
    std::vector<double> hist, pair, coracc, f1, auc, acc;
    for (const auto& r : reports) {
      hist.push_back(r.hist_avg);
      pair.push_back(r.pair_avg);
      coracc.push_back(r.cor_acc);
      f1.push_back(r.efficacy.f1);
      auc.push_back(r.efficacy.auc);
      acc.push_back(r.efficacy.acc);
    }
    out["aggregate"] = {{"sets", reports.size()},   {"hist", mean_std(hist)},
                        {"pair", mean_std(pair)},   {"cor_acc", mean_std(coracc)},
                        {"f1", mean_std(f1)},       {"auc", mean_std(auc)},
                        {"acc", mean_std(acc)}};
  }

  fs::path report_path = output.empty() ? outdir / "metrics.json" : fs::path(output);
  write_file(report_path, out.dump(2));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_accountant(double q, double sigma, long steps, double delta, double target_epsilon) {
  require(delta > 0.0 && delta < 1.0, "config", "delta must lie in (0,1)");
  require(q >= 0.0 && q <= 1.0, "config", "q must lie in [0,1]");
  require(steps >= 0, "config", "steps must be non-negative");
  json out;
  if (target_epsilon > 0.0) {
    double calibrated = privacy::calibrate_sigma(q, steps, delta, target_epsilon);
    auto check = privacy::epsilon(q, calibrated, steps, delta);
    out["sigma"] = calibrated;
    out["epsilon_at_sigma"] = check.epsilon;
    out["target_epsilon"] = target_epsilon;
  } else {
    require(sigma > 0.0, "config", "either --sigma or --target-epsilon is required");
    auto eps = privacy::epsilon(q, sigma, steps, delta);
    out["epsilon"] = eps.epsilon;
    out["epsilon_raw"] = eps.epsilon_raw;
    out["best_alpha"] = eps.best_alpha;
  }
  out["q"] = q;
  out["steps"] = steps;
  out["delta"] = delta;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int exit_code_for(const std::string& category) {
  if (category == "usage" || category == "config") return 1;
  if (category == "io" || category == "parse") return 2;
  if (category == "domain") return 3;
  if (category == "budget") return 4;
  return 5;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"differentially private synthetic tabular data via two-stage fine-tuning"};
  app.require_subcommand(1);

  std::string config_path;

  auto* prepare = app.add_subcommand("prepare", "ingest a CSV, split it, emit the schema");
  prepare->add_option("--config", config_path, "run config JSON")->required();

  auto* train = app.add_subcommand("train", "train one regime");
  TrainFlags tf;
  train->add_option("--config", config_path, "run config JSON")->required();
  train
      ->add_option("--regime", tf.regime,
                   "one of stage1-u, stage1-o, stage2, dp-standard, non-dp")
      ->required();
  train->add_option("--parent", tf.parent, "stage-1 checkpoint for stage2");
  train->add_option("--tokenizer-from", tf.tokenizer_from,
                    "checkpoint whose tokenizer dp-standard/non-dp should reuse");
  train->add_option("--output", tf.output, "checkpoint output path");
  train->add_option("--epochs", tf.epochs, "override epochs");
  train->add_option("--lambda", tf.lambda, "override loss weighting (-1 = unweighted)");
  train->add_option("--target-epsilon", tf.target_epsilon, "override DP target epsilon");
  train->add_option("--noise-multiplier", tf.noise_multiplier, "override DP sigma");
  train->add_option("--learning-rate", tf.learning_rate, "override learning rate");
  train->add_option("--batch-size", tf.batch_size, "override batch size");
  train->add_option("--seed", tf.seed, "override stage seed");
  train->add_flag("--shuffle-columns{1},--no-shuffle-columns{0}", tf.shuffle,
                  "override column shuffling");

  auto* sample = app.add_subcommand("sample", "generate a synthetic table from a checkpoint");
  std::string ckpt_path, mode_flag, sample_output;
  long n_flag = 0, sample_seed = -1;
  sample->add_option("--config", config_path, "run config JSON")->required();
  sample->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  sample->add_option("--n", n_flag, "rows to generate (default: training size)");
  sample->add_option("--mode", mode_flag, "reject or impute");
  sample->add_option("--seed", sample_seed, "override sampling seed");
  sample->add_option("--output", sample_output, "synthetic CSV path");

  auto* eval = app.add_subcommand("eval", "score a synthetic table against real held-out data");
  std::string real_path, eval_ckpt, eval_output;
  std::vector<std::string> synth_paths;
  eval->add_option("--config", config_path, "run config JSON")->required();
  eval->add_option("--real", real_path, "real held-out CSV")->required();
  eval->add_option("--synthetic", synth_paths, "synthetic CSV (repeatable)")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint for perplexity");
  eval->add_option("--output", eval_output, "metrics report path");

  auto* accountant = app.add_subcommand("accountant", "query or calibrate the RDP accountant");
  double q = 0.0, sigma = 0.0, delta = 1e-5, target_epsilon = 0.0;
  long steps = 0;
  accountant->add_option("--q", q, "sampling rate")->required();
  accountant->add_option("--sigma", sigma, "noise multiplier (query mode)");
  accountant->add_option("--steps", steps, "number of steps")->required();
  accountant->add_option("--delta", delta, "delta");
  accountant->add_option("--target-epsilon", target_epsilon, "calibrate sigma to this epsilon");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << json{{"error", {{"category", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return exit_code_for("usage");
  }

  try {
    if (prepare->parsed()) return cmd_prepare(Config::load(config_path));
    if (train->parsed()) return cmd_train(Config::load(config_path), tf);
    if (sample->parsed())
      return cmd_sample(Config::load(config_path), ckpt_path, n_flag, mode_flag, sample_seed,
                        sample_output);
    if (eval->parsed())
      return cmd_eval(Config::load(config_path), real_path, synth_paths, eval_ckpt, eval_output);
    if (accountant->parsed()) return cmd_accountant(q, sigma, steps, delta, target_epsilon);
  } catch (const pipeline::BudgetExhausted& e) {
    try {
      Config cfg = Config::load(config_path);
      fs::path partial = cfg.output_dir() / (tf.regime + ".partial.ckpt");
      pipeline::save_checkpoint(e.partial(), partial.string());
      std::cerr << json{{"error",
                         {{"category", e.category()},
                          {"message", e.what()},
                          {"partial_checkpoint", partial.string()}}}}
                       .dump()
                << "\n";
    } catch (...) {
      std::cerr << json{{"error", {{"category", e.category()}, {"message", e.what()}}}}.dump()
                << "\n";
    }
    return exit_code_for(e.category());
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"category", e.category()}, {"message", e.what()}}}}.dump()
              << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"category", "internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return exit_code_for("internal");
  }
  return 0;
}

}  // namespace dptab::cli
