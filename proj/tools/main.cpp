#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hfslab/checkpoint.hpp"
#include "hfslab/dataset_io.hpp"
#include "hfslab/harness.hpp"
#include "hfslab/hfs_reference.hpp"

using namespace hfslab;

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// --preset NAME trains on the named correlation and evaluates on it plus
// the uncorrelated world.
void apply_preset(RunConfig& cfg, const std::string& name) {
  cfg.corr_train = correlation_preset(name);
  cfg.corr_eval = {cfg.corr_train};
  if (name != "none") cfg.corr_eval.push_back(correlation_preset("none"));
}

RunConfig load_run_config(const std::string& config_path,
                          const std::string& preset,
                          std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty()
                      ? default_run_config()
                      : RunConfig::from_json(read_json_file(config_path));
  if (!preset.empty()) apply_preset(cfg, preset);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

void print_record_summary(const RunRecord& rec, bool reused) {
  std::printf("run %s %s\n", rec.hash.c_str(),
              reused ? "(reused)" : "(trained)");
  if (rec.failed) {
    std::printf("  FAILED: %s\n", rec.failure.c_str());
    return;
  }
  if (!rec.trace.empty()) {
    const TracePoint& t = rec.trace.back();
    std::printf("  step %lld  total %.6f  sae %.6f  kl %.6f  hfs %.6f\n",
                static_cast<long long>(t.step), t.total, t.sae, t.kl, t.hfs);
  }
  for (const auto& [label, report] : rec.reports) {
    std::printf("  eval[%s]:", label.c_str());
    for (const auto& [name, value] : report.scores)
      std::printf(" %s=%.4f", name.c_str(), value);
    std::printf("\n");
    for (const auto& w : report.warnings)
      std::printf("    warning: %s\n", w.c_str());
  }
}

int cmd_dataset_gen(const std::string& config_path, const std::string& preset,
                    std::uint64_t seed, std::int64_t n,
                    const std::string& out) {
  RunConfig base = load_run_config(config_path, preset, seed);
  FactorWorld world(base.world);
  const FactorDataset d = sample_dataset(world, base.corr_train, n, seed);
  save_dataset(d, base.world, base.corr_train, seed, out);
  std::printf("wrote %lld rows (%s, %d factors, obs dim %lld) to %s.{json,factors.bin,obs.bin}\n",
              static_cast<long long>(d.size()), base.corr_train.label.c_str(),
              static_cast<int>(base.world.spec.cardinalities.size()),
              static_cast<long long>(world.observation_dim()), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& preset,
              std::optional<std::uint64_t> seed, const std::string& out) {
  const RunConfig cfg = load_run_config(config_path, preset, seed);
  const auto [rec, reused] = run_and_store(cfg, out);
  print_record_summary(rec, reused);
  return rec.failed ? 1 : 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out,
              int workers) {
  GridConfig grid = GridConfig::from_json(read_json_file(config_path));
  if (workers > 0) grid.workers = workers;
  const SweepResult res = sweep(grid, out);
  std::printf("sweep: %zu runs in %zu cells (%zu trained, %zu reused, %zu failed)\n",
              res.records.size(), res.cells.size(), res.executed, res.reused,
              res.failed);
  std::printf("aggregate: %s\n", res.aggregate_path.c_str());
  return res.failed == 0 ? 0 : 1;
}

int cmd_transfer_grid(const std::string& config_path, const std::string& out,
                      int workers) {
  TransferConfig cfg = TransferConfig::from_json(read_json_file(config_path));
  if (workers > 0) cfg.workers = workers;
  const TransferResult res = transfer_grid(cfg, out);
  std::printf("transfer grid over %zu correlations, %zu runs\n",
              res.labels.size(), res.records.size());
  for (std::size_t i = 0; i < res.labels.size(); ++i) {
    for (std::size_t j = 0; j < res.labels.size(); ++j)
      std::printf("  dci_d[%s -> %s] baseline %.4f weighted %.4f diff %+.4f\n",
                  res.labels[i].c_str(), res.labels[j].c_str(),
                  res.dci_d_baseline(static_cast<std::int64_t>(i),
                                     static_cast<std::int64_t>(j)),
                  res.dci_d_weighted(static_cast<std::int64_t>(i),
                                     static_cast<std::int64_t>(j)),
                  res.dci_d_diff(static_cast<std::int64_t>(i),
                                 static_cast<std::int64_t>(j)));
  }
  std::printf("matrices written under %s\n", out.c_str());
  return 0;
}

// Re-scores a stored checkpoint. The run directory supplies the model and
// (by default) the world; --dataset-in swaps in the world and correlation
// recorded in a dataset sidecar instead.
int cmd_eval(const std::string& run_dir, const std::string& dataset_in,
             const std::string& preset, std::optional<std::uint64_t> seed,
             const std::string& out) {
  const nlohmann::json stored = read_json_file(run_dir + "/record.json");
  const RunRecord rec = RunRecord::from_json(stored);
  const RunConfig cfg = RunConfig::from_json(rec.config);

  WorldConfig world_cfg = cfg.world;
  std::vector<CorrelationSpec> corrs = cfg.corr_eval;
  if (!dataset_in.empty()) {
    const LoadedDataset ds = load_dataset(dataset_in);
    world_cfg = ds.world;
    corrs = {ds.corr};
  }
  if (!preset.empty()) corrs = {correlation_preset(preset)};
  if (corrs.empty()) throw ConfigError("eval: no evaluation correlation");

  FactorWorld world(world_cfg);
  if (world.observation_dim() != cfg.model.obs_dim)
    throw ConfigError(
        "eval: world renders " + std::to_string(world.observation_dim()) +
        " columns but the stored model expects " +
        std::to_string(cfg.model.obs_dim));
  SaeModel model(cfg.model, 0);
  load_checkpoint(model.parameters(), run_dir + "/" + rec.checkpoint_prefix);

  const std::uint64_t metric_seed = seed ? *seed : cfg.seed;
  nlohmann::json out_reports = nlohmann::json::array();
  for (const auto& corr : corrs) {
    corr.validate(world_cfg.spec);
    const MetricReport report =
        evaluate_all(model, world, corr, cfg.metrics, metric_seed);
    std::printf("eval[%s]:", corr.label.c_str());
    for (const auto& [name, value] : report.scores)
      std::printf(" %s=%.4f", name.c_str(), value);
    std::printf("\n");
    for (const auto& w : report.warnings)
      std::printf("  warning: %s\n", w.c_str());
    out_reports.push_back(
        {{"label", corr.label}, {"report", report.to_json()}});
  }
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw ConfigError("cannot open output file: " + out);
    f << out_reports.dump(2) << "\n";
    std::printf("reports written to %s\n", out.c_str());
  }
  return 0;
}

// Cross-checks the optimized estimator against the brute-force loops on a
// stored representation table (plain CSV, one row per sample).
int cmd_oracle_hfs(const std::string& table_path, const std::string& variant,
                   double gamma_unused, int pairs_to_use, int subsample,
                   double tau, double tau1, double tau2,
                   const std::string& distance, std::uint64_t seed,
                   double tolerance) {
  (void)gamma_unused;
  const Mat z = load_csv(table_path);
  if (z.rows < 2 || z.cols < 2)
    throw ConfigError("oracle hfs: table needs at least 2 rows and 2 columns");

  const int k = static_cast<int>(z.cols);
  HfsConfig cfg;
  cfg.variant = hfs_variant_from_string(variant);
  cfg.gamma = 1.0;
  cfg.pairs_to_use = pairs_to_use > 0 ? pairs_to_use : k * (k - 1) / 2;
  cfg.subsample_count = subsample;
  cfg.tau = tau;
  cfg.tau1 = tau1;
  cfg.tau2 = tau2;
  cfg.distance = hfs_distance_from_string(distance);
  cfg.pair_seed = seed;
  cfg.validate(static_cast<int>(z.cols));

  const PairSet ps = cfg.make_pairs(static_cast<int>(z.cols), seed);
  const double fast = hfs_criterion(z, cfg, ps, seed);
  const double reference = ref_hfs_criterion(z, cfg, ps, seed);
  const double abs_err = std::fabs(fast - reference);
  std::printf("table %s: %lld rows x %lld dims, %zu pairs\n",
              table_path.c_str(), static_cast<long long>(z.rows),
              static_cast<long long>(z.cols), ps.pairs.size());
  std::printf("estimator  %.17g\nreference  %.17g\nabs error  %.3g (tolerance %.3g)\n",
              fast, reference, abs_err, tolerance);
  if (!(abs_err <= tolerance)) {
    std::printf("MISMATCH\n");
    return 1;
  }
  std::printf("OK\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hfslab: disentanglement laboratory for factorized-support training"};
  app.require_subcommand(1);

  std::string config_path, preset, out, dataset_in, dataset_out, run_dir;
  std::string table_path, variant = "pairwise", distance = "squared_euclidean";
  std::uint64_t seed_value = 0;
  bool seed_given = false;
  std::int64_t n_rows = 10000;
  int workers = 0, pairs_to_use = 0, subsample = 256;
  double tau = 0.1, tau1 = 0.1, tau2 = 0.1, tolerance = 1e-9;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_value, "Override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
  };

  CLI::App* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  CLI::App* gen = dataset->add_subcommand("gen", "Sample and store a dataset");
  gen->add_option("--config", config_path, "Run config JSON (world + correlation)");
  gen->add_option("--preset", preset, "Correlation preset name");
  add_seed(gen);
  gen->add_option("--n", n_rows, "Number of rows to sample");
  gen->add_option("--dataset-out", dataset_out, "Output basename")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "Train one run and store it");
  train_cmd->add_option("--config", config_path, "Run config JSON");
  train_cmd->add_option("--preset", preset, "Correlation preset for train + eval");
  add_seed(train_cmd);
  train_cmd->add_option("--out", out, "Output directory")->required();

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a hyperparameter grid");
  sweep_cmd->add_option("--config", config_path, "Grid config JSON")->required();
  sweep_cmd->add_option("--out", out, "Output directory")->required();
  sweep_cmd->add_option("--workers", workers, "Parallel worker count");

  CLI::App* transfer = app.add_subcommand(
      "transfer-grid", "Train-correlation x eval-correlation grid");
  transfer->add_option("--config", config_path, "Transfer config JSON")->required();
  transfer->add_option("--out", out, "Output directory")->required();
  transfer->add_option("--workers", workers, "Parallel worker count");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Score a stored checkpoint");
  eval_cmd->add_option("--run", run_dir, "Stored run directory (runs/<hash>)")
      ->required();
  eval_cmd->add_option("--dataset-in", dataset_in,
                       "Take world + correlation from a stored dataset");
  eval_cmd->add_option("--preset", preset, "Evaluate under this preset only");
  add_seed(eval_cmd);
  eval_cmd->add_option("--out", out, "Write reports to this JSON file");

  CLI::App* oracle = app.add_subcommand("oracle", "Brute-force cross-checks");
  oracle->require_subcommand(1);
  CLI::App* oracle_hfs =
      oracle->add_subcommand("hfs", "Check the estimator on a stored table");
  oracle_hfs->add_option("--table", table_path, "Representation CSV (rows x dims)")
      ->required();
  oracle_hfs->add_option("--variant", variant,
                         "pairwise|averaged|subsampled|softmin|soft|single_pair");
  oracle_hfs->add_option("--pairs", pairs_to_use,
                         "Column pairs to use (0 = all)");
  oracle_hfs->add_option("--subsample", subsample, "Tuples for the subsampled variant");
  oracle_hfs->add_option("--tau", tau, "Softmin temperature");
  oracle_hfs->add_option("--tau1", tau1, "Soft variant inner temperature");
  oracle_hfs->add_option("--tau2", tau2, "Soft variant outer temperature");
  oracle_hfs->add_option("--distance", distance, "squared_euclidean|euclidean");
  add_seed(oracle_hfs);
  oracle_hfs->add_option("--tolerance", tolerance, "Mismatch threshold");

  CLI11_PARSE(app, argc, argv);

  const std::optional<std::uint64_t> seed =
      seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;

  try {
    if (gen->parsed())
      return cmd_dataset_gen(config_path, preset, seed.value_or(2024), n_rows,
                             dataset_out);
    if (train_cmd->parsed()) return cmd_train(config_path, preset, seed, out);
    if (sweep_cmd->parsed()) return cmd_sweep(config_path, out, workers);
    if (transfer->parsed()) return cmd_transfer_grid(config_path, out, workers);
    if (eval_cmd->parsed())
      return cmd_eval(run_dir, dataset_in, preset, seed, out);
    if (oracle_hfs->parsed())
      return cmd_oracle_hfs(table_path, variant, 0.0, pairs_to_use, subsample,
                            tau, tau1, tau2, distance, seed.value_or(0),
                            tolerance);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "contract error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 1;
}
