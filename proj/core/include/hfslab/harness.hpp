#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hfslab/factor_world.hpp"
#include "hfslab/hfs.hpp"
#include "hfslab/metrics.hpp"
#include "hfslab/models.hpp"
#include "hfslab/optim.hpp"

namespace hfslab {

// JSON round-trips for the config structs the harness composes. Missing
// keys fall back to the struct defaults, so partial config files work.
void to_json(nlohmann::json& j, const HfsConfig& c);
void from_json(const nlohmann::json& j, HfsConfig& c);
void to_json(nlohmann::json& j, const SaeConfig& c);
void from_json(const nlohmann::json& j, SaeConfig& c);
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
void to_json(nlohmann::json& j, const MetricConfig& c);
void from_json(const nlohmann::json& j, MetricConfig& c);

// Named correlation structures on the default five-factor world:
//   none      uncorrelated
//   pair1     factors 0,1 correlated (sigma 0.1)
//   pair1-inv same pair, inverted (anti-correlated)
//   pairs2    pairs (0,1) and (2,3), sigma 0.1 each
//   conf      factor 0 confounds all others (sigma 0.2)
CorrelationSpec correlation_preset(const std::string& name);
std::vector<std::string> correlation_preset_names();

// One training run: data, model, objective, optimizer, and evaluation
// settings. The canonical JSON dump of this struct (config_json) is hashed
// to identify the run on disk; everything that affects the result is in it.
struct RunConfig {
  WorldConfig world;
  CorrelationSpec corr_train;
  std::vector<CorrelationSpec> corr_eval;  // one metric report per entry
  SaeConfig model;
  HfsConfig hfs;
  double beta = 1.0;
  AdamConfig optim;
  std::int64_t steps = 3000;
  std::int64_t batch_size = 64;
  std::int64_t eval_every = 500;
  std::int64_t n_train = 10000;  // training dataset rows
  MetricConfig metrics;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

// Desk-scale defaults on the default toy world (runs in seconds, not the
// large-scale settings the estimators were designed for).
RunConfig default_run_config();

std::uint64_t fnv1a64(const std::string& s);

struct TracePoint {
  std::int64_t step = 0;
  double total = 0, sae = 0, kl = 0, hfs = 0, scale = 0;
};

struct RunRecord {
  std::string hash;
  nlohmann::json config;  // the canonical dump the hash covers
  bool failed = false;
  std::string failure;
  std::vector<TracePoint> trace;
  // One report per corr_eval entry, keyed by the correlation label.
  std::vector<std::pair<std::string, MetricReport>> reports;
  double wall_seconds = 0;
  std::string checkpoint_prefix;  // relative to the run directory; "" if none

  const MetricReport* report_for(const std::string& label) const;
  double score(const std::string& label, const std::string& metric) const;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

// Minibatch optimization of the composite objective. Deterministic given
// the config; a non-finite loss aborts the run and marks the record failed,
// keeping the last finite trace. Pure: no filesystem access.
RunRecord train(const RunConfig& cfg);

// train() with persistence: records live in <out_dir>/runs/<hash>/ as
// record.json + trace.csv + model checkpoint. An existing record.json is
// loaded instead of re-running, which makes interrupted sweeps resumable.
// Returns the record and whether it was reused.
std::pair<RunRecord, bool> run_and_store(const RunConfig& cfg,
                                         const std::string& out_dir);

// Cartesian hyperparameter sweep over the named axes; an empty axis means
// "keep the base value". Every (cell, seed) combination becomes one run.
struct GridConfig {
  RunConfig base;
  std::vector<double> gammas;
  std::vector<double> betas;
  std::vector<double> sigmas;  // rewrites sigma of every correlated pair
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::int64_t max_runs = 4096;
  int workers = 1;  // HFS_LAB_WORKERS overrides

  nlohmann::json to_json() const;
  static GridConfig from_json(const nlohmann::json& j);
};

struct SweepCell {
  double gamma = 0, beta = 1, sigma = 0;
  std::string variant;
  std::vector<std::size_t> record_index;  // one per seed, into records
};

struct SweepResult {
  std::vector<RunRecord> records;  // cell-major, seeds innermost
  std::vector<SweepCell> cells;
  std::int64_t executed = 0;
  std::int64_t reused = 0;
  std::int64_t failed = 0;
  std::string aggregate_path;
};

// Runs the sweep and writes <out_dir>/aggregate.csv with columns
//   preset, variant, gamma, beta, sigma, seed-count, metric, median, p25, p75
// where metric is "<eval label>:<score name>" and the statistics aggregate
// the surviving (non-failed) seeds of a cell. Output is byte-stable across
// invocations, including resumed ones.
SweepResult sweep(const GridConfig& grid, const std::string& out_dir);

// Correlation-shift study: trains baseline (gamma = 0) and criterion-weighted
// model sets for every source correlation and scores them on every target
// correlation. Matrices are medians over seeds, rows = source, cols = target.
struct TransferConfig {
  RunConfig base;
  std::vector<CorrelationSpec> corrs;  // sources and targets
  double gamma = 400.0;                // weight of the non-baseline arm
  std::vector<std::uint64_t> seeds;
  int workers = 1;

  nlohmann::json to_json() const;
  static TransferConfig from_json(const nlohmann::json& j);
};

struct TransferResult {
  std::vector<std::string> labels;
  Mat dci_d_baseline, dci_d_weighted, dci_d_diff;
  Mat dci_i_baseline, dci_i_weighted, dci_i_diff;
  std::vector<RunRecord> records;

  nlohmann::json to_json() const;
};

// Writes transfer.json plus one CSV per matrix under out_dir.
TransferResult transfer_grid(const TransferConfig& cfg,
                             const std::string& out_dir);

// Quantile with linear interpolation between order statistics (q in [0,1]).
double percentile(std::vector<double> v, double q);

// Shortest-round-trip decimal for config values; %.17g for statistics.
std::string format_stat(double v);

// Worker count: explicit value, unless HFS_LAB_WORKERS is set and positive.
int resolve_workers(int configured);

}  // namespace hfslab
