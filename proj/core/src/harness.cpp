#include "hfslab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "hfslab/checkpoint.hpp"
#include "hfslab/rng.hpp"

namespace fs = std::filesystem;

namespace hfslab {

namespace {

std::string probe_kind_to_string(ProbeKind k) {
  return k == ProbeKind::kTreeEnsemble ? "tree" : "linear";
}

ProbeKind probe_kind_from_string(const std::string& s) {
  if (s == "tree") return ProbeKind::kTreeEnsemble;
  if (s == "linear") return ProbeKind::kL1Linear;
  throw ConfigError("unknown probe kind: " + s);
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw ContractError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Runs fn(0..n-1) on up to `workers` threads; the index order of results is
// the caller's responsibility (each index writes only its own slot).
void run_parallel(int workers, std::int64_t n,
                  const std::function<void(std::int64_t)>& fn) {
  workers = static_cast<int>(std::min<std::int64_t>(workers, n));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto body = [&]() {
    while (true) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

nlohmann::json mat_rows(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::int64_t r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::int64_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string matrix_csv(const std::vector<std::string>& labels, const Mat& m) {
  std::ostringstream out;
  for (const auto& l : labels) out << "," << l;
  out << "\n";
  for (std::int64_t r = 0; r < m.rows; ++r) {
    out << labels[static_cast<std::size_t>(r)];
    for (std::int64_t c = 0; c < m.cols; ++c) out << "," << format_stat(m(r, c));
    out << "\n";
  }
  return out.str();
}

// Config-value columns print like the JSON dump (shortest round-trip).
std::string format_config(double v) { return nlohmann::json(v).dump(); }

}  // namespace

void to_json(nlohmann::json& j, const HfsConfig& c) {
  j = nlohmann::json{{"variant", to_string(c.variant)},
                     {"gamma", c.gamma},
                     {"pairs", c.pairs_to_use},
                     {"subsample", c.subsample_count},
                     {"tau", c.tau},
                     {"tau1", c.tau1},
                     {"tau2", c.tau2},
                     {"distance", to_string(c.distance)},
                     {"pair_seed", c.pair_seed},
                     {"resample_pairs", c.resample_pairs},
                     {"scale_reg", to_string(c.scale_reg)},
                     {"scale_weight", c.scale_weight},
                     {"scale_min", c.scale_min},
                     {"scale_max", c.scale_max}};
}

void from_json(const nlohmann::json& j, HfsConfig& c) {
  c = HfsConfig{};
  c.variant = hfs_variant_from_string(j.value("variant", to_string(c.variant)));
  c.gamma = j.value("gamma", c.gamma);
  c.pairs_to_use = j.value("pairs", c.pairs_to_use);
  c.subsample_count = j.value("subsample", c.subsample_count);
  c.tau = j.value("tau", c.tau);
  c.tau1 = j.value("tau1", c.tau1);
  c.tau2 = j.value("tau2", c.tau2);
  c.distance = hfs_distance_from_string(j.value("distance", to_string(c.distance)));
  c.pair_seed = j.value("pair_seed", c.pair_seed);
  c.resample_pairs = j.value("resample_pairs", c.resample_pairs);
  c.scale_reg = scale_reg_from_string(j.value("scale_reg", to_string(c.scale_reg)));
  c.scale_weight = j.value("scale_weight", c.scale_weight);
  c.scale_min = j.value("scale_min", c.scale_min);
  c.scale_max = j.value("scale_max", c.scale_max);
}

void to_json(nlohmann::json& j, const SaeConfig& c) {
  j = nlohmann::json{{"obs_dim", c.obs_dim},
                     {"latent_dim", c.latent_dim},
                     {"encoder_hidden", c.encoder_hidden},
                     {"decoder_hidden", c.decoder_hidden},
                     {"min_logvar", c.min_logvar}};
}

void from_json(const nlohmann::json& j, SaeConfig& c) {
  c = SaeConfig{};
  c.obs_dim = j.value("obs_dim", c.obs_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.min_logvar = j.value("min_logvar", c.min_logvar);
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = nlohmann::json{
      {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  c = AdamConfig{};
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
}

void to_json(nlohmann::json& j, const MetricConfig& c) {
  j = nlohmann::json{
      {"dci", c.dci},
      {"mig", c.mig},
      {"modularity", c.modularity},
      {"sap", c.sap},
      {"betavae", c.betavae},
      {"factorvae", c.factorvae},
      {"hfs", c.hfs},
      {"n_train", c.n_train},
      {"n_test", c.n_test},
      {"probe",
       {{"kind", probe_kind_to_string(c.probe.kind)},
        {"n_trees", c.probe.gbt.n_trees},
        {"max_depth", c.probe.gbt.max_depth},
        {"shrinkage", c.probe.gbt.shrinkage},
        {"min_leaf", c.probe.gbt.min_leaf},
        {"lambda", c.probe.lasso.lambda},
        {"max_iter", c.probe.lasso.max_iter},
        {"tol", c.probe.lasso.tol}}},
      {"mi", {{"bins", c.mi.bins}, {"n_samples", c.mi.n_samples}}},
      {"votes",
       {{"n_train", c.votes.n_train},
        {"n_test", c.votes.n_test},
        {"pairs_per_vote", c.votes.pairs_per_vote},
        {"collapse_threshold", c.votes.collapse_threshold}}},
      {"hfs_batch_size", c.hfs_batch_size},
      {"hfs_batches", c.hfs_batches}};
}

void from_json(const nlohmann::json& j, MetricConfig& c) {
  c = MetricConfig{};
  c.dci = j.value("dci", c.dci);
  c.mig = j.value("mig", c.mig);
  c.modularity = j.value("modularity", c.modularity);
  c.sap = j.value("sap", c.sap);
  c.betavae = j.value("betavae", c.betavae);
  c.factorvae = j.value("factorvae", c.factorvae);
  c.hfs = j.value("hfs", c.hfs);
  c.n_train = j.value("n_train", c.n_train);
  c.n_test = j.value("n_test", c.n_test);
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    c.probe.kind = probe_kind_from_string(
        p.value("kind", probe_kind_to_string(c.probe.kind)));
    c.probe.gbt.n_trees = p.value("n_trees", c.probe.gbt.n_trees);
    c.probe.gbt.max_depth = p.value("max_depth", c.probe.gbt.max_depth);
    c.probe.gbt.shrinkage = p.value("shrinkage", c.probe.gbt.shrinkage);
    c.probe.gbt.min_leaf = p.value("min_leaf", c.probe.gbt.min_leaf);
    c.probe.lasso.lambda = p.value("lambda", c.probe.lasso.lambda);
    c.probe.lasso.max_iter = p.value("max_iter", c.probe.lasso.max_iter);
    c.probe.lasso.tol = p.value("tol", c.probe.lasso.tol);
  }
  if (j.contains("mi")) {
    c.mi.bins = j.at("mi").value("bins", c.mi.bins);
    c.mi.n_samples = j.at("mi").value("n_samples", c.mi.n_samples);
  }
  if (j.contains("votes")) {
    const auto& v = j.at("votes");
    c.votes.n_train = v.value("n_train", c.votes.n_train);
    c.votes.n_test = v.value("n_test", c.votes.n_test);
    c.votes.pairs_per_vote = v.value("pairs_per_vote", c.votes.pairs_per_vote);
    c.votes.collapse_threshold =
        v.value("collapse_threshold", c.votes.collapse_threshold);
  }
  c.hfs_batch_size = j.value("hfs_batch_size", c.hfs_batch_size);
  c.hfs_batches = j.value("hfs_batches", c.hfs_batches);
}

CorrelationSpec correlation_preset(const std::string& name) {
  CorrelationSpec corr;
  corr.label = name;
  if (name == "none") return corr;
  if (name == "pair1") {
    corr.pairs = {CorrPair{0, 1, 0.1, false}};
    return corr;
  }
  if (name == "pair1-inv") {
    corr.pairs = {CorrPair{0, 1, 0.1, true}};
    return corr;
  }
  if (name == "pairs2") {
    corr.pairs = {CorrPair{0, 1, 0.1, false}, CorrPair{2, 3, 0.1, false}};
    return corr;
  }
  if (name == "conf") {
    corr.confounder = Confounder{0, 0.2};
    return corr;
  }
  throw ConfigError("unknown correlation preset: " + name);
}

std::vector<std::string> correlation_preset_names() {
  return {"none", "pair1", "pair1-inv", "pairs2", "conf"};
}

void RunConfig::validate() const {
  if (steps < 1) throw ConfigError("run config: steps must be >= 1");
  if (batch_size < 2) throw ConfigError("run config: batch size must be >= 2");
  if (eval_every < 1) throw ConfigError("run config: eval interval must be >= 1");
  if (n_train < batch_size)
    throw ConfigError("run config: training set smaller than one batch");
  if (beta < 0) throw ConfigError("run config: beta must be >= 0");
  world.spec.validate();
  corr_train.validate(world.spec);
  for (const auto& c : corr_eval) c.validate(world.spec);
  if (model.obs_dim != world.observation_dim)
    throw ConfigError("run config: model obs_dim does not match the world");
  hfs.validate(static_cast<int>(model.latent_dim));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["world"] = world;
  j["corr_train"] = corr_train;
  j["corr_eval"] = corr_eval;
  j["model"] = model;
  j["hfs"] = hfs;
  j["beta"] = beta;
  j["optim"] = optim;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["eval_every"] = eval_every;
  j["n_train"] = n_train;
  j["metrics"] = metrics;
  j["seed"] = seed;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("world")) c.world = j.at("world").get<WorldConfig>();
  if (j.contains("corr_train"))
    c.corr_train = j.at("corr_train").get<CorrelationSpec>();
  if (j.contains("corr_eval"))
    c.corr_eval = j.at("corr_eval").get<std::vector<CorrelationSpec>>();
  if (j.contains("model")) c.model = j.at("model").get<SaeConfig>();
  if (j.contains("hfs")) c.hfs = j.at("hfs").get<HfsConfig>();
  c.beta = j.value("beta", c.beta);
  if (j.contains("optim")) c.optim = j.at("optim").get<AdamConfig>();
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.n_train = j.value("n_train", c.n_train);
  if (j.contains("metrics")) c.metrics = j.at("metrics").get<MetricConfig>();
  c.seed = j.value("seed", c.seed);
  return c;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

RunConfig default_run_config() {
  RunConfig c;
  c.corr_train = correlation_preset("none");
  c.corr_eval = {correlation_preset("none")};
  c.optim.lr = 1e-3;
  c.metrics.n_train = 2500;
  c.metrics.n_test = 1200;
  c.metrics.mi.n_samples = 2500;
  c.metrics.probe.gbt.n_trees = 50;
  return c;
}

const MetricReport* RunRecord::report_for(const std::string& label) const {
  for (const auto& [l, r] : reports)
    if (l == label) return &r;
  return nullptr;
}

double RunRecord::score(const std::string& label,
                        const std::string& metric) const {
  const MetricReport* r = report_for(label);
  if (!r) throw ConfigError("run record: no report for label " + label);
  const auto it = r->scores.find(metric);
  if (it == r->scores.end())
    throw ConfigError("run record: no metric " + metric + " under " + label);
  return it->second;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["hash"] = hash;
  j["config"] = config;
  j["failed"] = failed;
  j["failure"] = failure;
  nlohmann::json tr = nlohmann::json::array();
  for (const auto& p : trace)
    tr.push_back({{"step", p.step},
                  {"total", p.total},
                  {"sae", p.sae},
                  {"kl", p.kl},
                  {"hfs", p.hfs},
                  {"scale", p.scale}});
  j["trace"] = std::move(tr);
  nlohmann::json rep = nlohmann::json::array();
  for (const auto& [label, report] : reports)
    rep.push_back({{"label", label}, {"report", report.to_json()}});
  j["reports"] = std::move(rep);
  j["wall_seconds"] = wall_seconds;
  j["checkpoint"] = checkpoint_prefix;
  return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.hash = j.at("hash").get<std::string>();
  r.config = j.at("config");
  r.failed = j.at("failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  for (const auto& p : j.at("trace")) {
    TracePoint t;
    t.step = p.at("step").get<std::int64_t>();
    t.total = p.at("total").get<double>();
    t.sae = p.at("sae").get<double>();
    t.kl = p.at("kl").get<double>();
    t.hfs = p.at("hfs").get<double>();
    t.scale = p.at("scale").get<double>();
    r.trace.push_back(t);
  }
  for (const auto& e : j.at("reports"))
    r.reports.emplace_back(e.at("label").get<std::string>(),
                           MetricReport::from_json(e.at("report")));
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.checkpoint_prefix = j.value("checkpoint", std::string{});
  return r;
}

namespace {

RunRecord train_impl(const RunConfig& cfg, std::unique_ptr<SaeModel>* keep) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg.to_json();
  rec.hash = cfg.hash();

  const FactorWorld world(cfg.world);
  const FactorDataset data = sample_dataset(world, cfg.corr_train, cfg.n_train,
                                            derive_seed(cfg.seed, {0x646174}));
  auto model = std::make_unique<SaeModel>(cfg.model, derive_seed(cfg.seed, {0x6d6f64}));
  Adam opt(model->parameters(), cfg.optim);
  Rng eps_rng(derive_seed(cfg.seed, {0x657073}));
  Rng batch_rng(derive_seed(cfg.seed, {0x626174}));
  const int latent = static_cast<int>(cfg.model.latent_dim);
  const PairSet run_pairs =
      cfg.hfs.make_pairs(latent, derive_seed(cfg.seed, {0x7072}));

  const std::int64_t b = cfg.batch_size;
  const std::int64_t obs = cfg.model.obs_dim;
  std::vector<double> xb(static_cast<std::size_t>(b * obs));
  for (std::int64_t s = 1; s <= cfg.steps; ++s) {
    for (std::int64_t r = 0; r < b; ++r) {
      const std::int64_t row = batch_rng.uniform_int(cfg.n_train);
      for (std::int64_t c = 0; c < obs; ++c)
        xb[static_cast<std::size_t>(r * obs + c)] = data.observations(row, c);
    }
    Tape tape;
    const Tensor x = tape.constant({b, obs}, xb);
    const PairSet pairs =
        cfg.hfs.resample_pairs
            ? cfg.hfs.make_pairs(latent, derive_seed(cfg.seed, {0x7072, static_cast<std::uint64_t>(s)}))
            : run_pairs;
    try {
      const ObjectiveParts parts =
          objective(tape, *model, x, cfg.hfs, cfg.beta, eps_rng, pairs,
                    derive_seed(cfg.seed, {0x7375, static_cast<std::uint64_t>(s)}));
      const double total = parts.total.item();
      if (!std::isfinite(total)) {
        rec.failed = true;
        rec.failure = "non-finite loss at step " + std::to_string(s);
        break;
      }
      if (s == 1 || s % cfg.eval_every == 0 || s == cfg.steps)
        rec.trace.push_back({s, total, parts.sae_value(), parts.kl_value(),
                             parts.hfs_value(), parts.scale_value()});
      tape.backward(parts.total);
    } catch (const ContractError& e) {
      // numeric blowup tripping a model-internal check; keep what was finite
      rec.failed = true;
      rec.failure = "aborted at step " + std::to_string(s) + ": " + e.what();
      break;
    }
    opt.step();
    opt.zero_grad();
  }

  if (!rec.failed) {
    for (std::size_t i = 0; i < cfg.corr_eval.size(); ++i) {
      const auto& corr = cfg.corr_eval[i];
      rec.reports.emplace_back(
          corr.label,
          evaluate_all(*model, world, corr, cfg.metrics,
                       derive_seed(cfg.seed, {0x6576, static_cast<std::uint64_t>(i)})));
    }
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (keep) *keep = std::move(model);
  return rec;
}

std::string trace_csv(const RunRecord& rec) {
  std::ostringstream out;
  out << "step,total,sae,kl,hfs,scale\n";
  for (const auto& p : rec.trace)
    out << p.step << "," << format_stat(p.total) << "," << format_stat(p.sae)
        << "," << format_stat(p.kl) << "," << format_stat(p.hfs) << ","
        << format_stat(p.scale) << "\n";
  return out.str();
}

}  // namespace

RunRecord train(const RunConfig& cfg) { return train_impl(cfg, nullptr); }

std::pair<RunRecord, bool> run_and_store(const RunConfig& cfg,
                                         const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / "runs" / cfg.hash();
  const fs::path rec_path = dir / "record.json";
  if (fs::exists(rec_path)) {
    std::ifstream in(rec_path);
    nlohmann::json j;
    in >> j;
    return {RunRecord::from_json(j), true};
  }
  fs::create_directories(dir);
  std::unique_ptr<SaeModel> model;
  RunRecord rec = train_impl(cfg, &model);
  if (model) {
    const auto params = static_cast<const SaeModel&>(*model).parameters();
    save_checkpoint(params, (dir / "model").string());
    rec.checkpoint_prefix = "model";
  }
  write_file_atomic(dir / "trace.csv", trace_csv(rec));
  write_file_atomic(rec_path, rec.to_json().dump(2) + "\n");
  return {rec, false};
}

nlohmann::json GridConfig::to_json() const {
  return nlohmann::json{{"base", base.to_json()}, {"gammas", gammas},
                        {"betas", betas},         {"sigmas", sigmas},
                        {"variants", variants},   {"seeds", seeds},
                        {"max_runs", max_runs},   {"workers", workers}};
}

GridConfig GridConfig::from_json(const nlohmann::json& j) {
  GridConfig g;
  if (j.contains("base")) g.base = RunConfig::from_json(j.at("base"));
  g.gammas = j.value("gammas", g.gammas);
  g.betas = j.value("betas", g.betas);
  g.sigmas = j.value("sigmas", g.sigmas);
  g.variants = j.value("variants", g.variants);
  g.seeds = j.value("seeds", g.seeds);
  g.max_runs = j.value("max_runs", g.max_runs);
  g.workers = j.value("workers", g.workers);
  return g;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("percentile of empty sample");
  if (q < 0 || q > 1) throw ConfigError("percentile fraction out of range");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (v[lo + 1] - v[lo]) * frac;
}

std::string format_stat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int resolve_workers(int configured) {
  if (const char* env = std::getenv("HFS_LAB_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return std::max(configured, 1);
}

namespace {

CorrelationSpec with_sigma(CorrelationSpec corr, double sigma) {
  for (auto& p : corr.pairs) p.sigma = sigma;
  if (corr.confounder) corr.confounder->sigma = sigma;
  return corr;
}

double effective_sigma(const CorrelationSpec& corr) {
  if (!corr.pairs.empty()) return corr.pairs.front().sigma;
  if (corr.confounder) return corr.confounder->sigma;
  return 0.0;
}

}  // namespace

SweepResult sweep(const GridConfig& grid, const std::string& out_dir) {
  const auto gammas =
      grid.gammas.empty() ? std::vector<double>{grid.base.hfs.gamma} : grid.gammas;
  const auto betas =
      grid.betas.empty() ? std::vector<double>{grid.base.beta} : grid.betas;
  const auto variants = grid.variants.empty()
                            ? std::vector<std::string>{to_string(grid.base.hfs.variant)}
                            : grid.variants;
  const bool sweep_sigma = !grid.sigmas.empty();
  const auto sigmas = sweep_sigma
                          ? grid.sigmas
                          : std::vector<double>{effective_sigma(grid.base.corr_train)};
  const auto seeds = grid.seeds.empty() ? std::vector<std::uint64_t>{grid.base.seed}
                                        : grid.seeds;

  SweepResult result;
  std::vector<RunConfig> configs;
  for (const auto& variant : variants)
    for (const double gamma : gammas)
      for (const double beta : betas)
        for (const double sigma : sigmas) {
          SweepCell cell;
          cell.variant = variant;
          cell.gamma = gamma;
          cell.beta = beta;
          cell.sigma = sigma;
          for (const auto seed : seeds) {
            RunConfig cfg = grid.base;
            cfg.hfs.variant = hfs_variant_from_string(variant);
            cfg.hfs.gamma = gamma;
            cfg.beta = beta;
            if (sweep_sigma)
              cfg.corr_train = with_sigma(cfg.corr_train, sigma);
            cfg.seed = seed;
            cell.record_index.push_back(configs.size());
            configs.push_back(std::move(cfg));
          }
          result.cells.push_back(std::move(cell));
        }
  if (static_cast<std::int64_t>(configs.size()) > grid.max_runs)
    throw ConfigError("sweep of " + std::to_string(configs.size()) +
                      " runs exceeds the cap of " + std::to_string(grid.max_runs));

  result.records.resize(configs.size());
  std::vector<char> reused_flags(configs.size(), 0);
  run_parallel(resolve_workers(grid.workers),
               static_cast<std::int64_t>(configs.size()), [&](std::int64_t i) {
                 auto [rec, reused] =
                     run_and_store(configs[static_cast<std::size_t>(i)], out_dir);
                 result.records[static_cast<std::size_t>(i)] = std::move(rec);
                 reused_flags[static_cast<std::size_t>(i)] = reused ? 1 : 0;
               });
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (reused_flags[i])
      ++result.reused;
    else
      ++result.executed;
    if (result.records[i].failed) ++result.failed;
  }

  // aggregate: per cell, per "<label>:<metric>", stats over surviving seeds
  std::ostringstream csv;
  csv << "preset,variant,gamma,beta,sigma,seed-count,metric,median,p25,p75\n";
  const std::string preset = grid.base.corr_train.label;
  for (const auto& cell : result.cells) {
    std::map<std::string, std::vector<double>> values;
    for (const std::size_t idx : cell.record_index) {
      const RunRecord& rec = result.records[idx];
      if (rec.failed) continue;
      for (const auto& [label, report] : rec.reports)
        for (const auto& [name, value] : report.scores)
          values[label + ":" + name].push_back(value);
    }
    for (const auto& [metric, v] : values) {
      csv << preset << "," << cell.variant << "," << format_config(cell.gamma)
          << "," << format_config(cell.beta) << "," << format_config(cell.sigma)
          << "," << v.size() << "," << metric << ","
          << format_stat(percentile(v, 0.5)) << ","
          << format_stat(percentile(v, 0.25)) << ","
          << format_stat(percentile(v, 0.75)) << "\n";
    }
  }
  fs::create_directories(out_dir);
  const fs::path csv_path = fs::path(out_dir) / "aggregate.csv";
  write_file_atomic(csv_path, csv.str());
  result.aggregate_path = csv_path.string();
  return result;
}

nlohmann::json TransferConfig::to_json() const {
  return nlohmann::json{{"base", base.to_json()},
                        {"corrs", corrs},
                        {"gamma", gamma},
                        {"seeds", seeds},
                        {"workers", workers}};
}

TransferConfig TransferConfig::from_json(const nlohmann::json& j) {
  TransferConfig c;
  if (j.contains("base")) c.base = RunConfig::from_json(j.at("base"));
  if (j.contains("corrs"))
    c.corrs = j.at("corrs").get<std::vector<CorrelationSpec>>();
  c.gamma = j.value("gamma", c.gamma);
  c.seeds = j.value("seeds", c.seeds);
  c.workers = j.value("workers", c.workers);
  return c;
}

nlohmann::json TransferResult::to_json() const {
  return nlohmann::json{
      {"labels", labels},
      {"dci_d",
       {{"baseline", mat_rows(dci_d_baseline)},
        {"weighted", mat_rows(dci_d_weighted)},
        {"diff", mat_rows(dci_d_diff)}}},
      {"dci_i",
       {{"baseline", mat_rows(dci_i_baseline)},
        {"weighted", mat_rows(dci_i_weighted)},
        {"diff", mat_rows(dci_i_diff)}}}};
}

TransferResult transfer_grid(const TransferConfig& cfg,
                             const std::string& out_dir) {
  if (cfg.corrs.empty())
    throw ConfigError("transfer grid needs at least one correlation");
  for (std::size_t i = 0; i < cfg.corrs.size(); ++i)
    for (std::size_t j = i + 1; j < cfg.corrs.size(); ++j)
      if (cfg.corrs[i].label == cfg.corrs[j].label)
        throw ConfigError("transfer grid labels must be distinct: " +
                          cfg.corrs[i].label);
  const auto seeds = cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.base.seed}
                                       : cfg.seeds;
  const auto n = static_cast<std::int64_t>(cfg.corrs.size());
  const auto n_seeds = static_cast<std::int64_t>(seeds.size());

  // arm 0 = baseline (gamma 0), arm 1 = criterion-weighted
  std::vector<RunConfig> configs;
  for (int arm = 0; arm < 2; ++arm)
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t k = 0; k < n_seeds; ++k) {
        RunConfig rc = cfg.base;
        rc.corr_train = cfg.corrs[static_cast<std::size_t>(s)];
        rc.corr_eval = cfg.corrs;
        rc.hfs.gamma = arm == 0 ? 0.0 : cfg.gamma;
        rc.seed = seeds[static_cast<std::size_t>(k)];
        configs.push_back(std::move(rc));
      }

  TransferResult result;
  result.records.resize(configs.size());
  run_parallel(resolve_workers(cfg.workers),
               static_cast<std::int64_t>(configs.size()), [&](std::int64_t i) {
                 result.records[static_cast<std::size_t>(i)] =
                     run_and_store(configs[static_cast<std::size_t>(i)], out_dir).first;
               });

  for (const auto& c : cfg.corrs) result.labels.push_back(c.label);
  auto cell_median = [&](int arm, std::int64_t src, const std::string& target,
                         const std::string& metric) {
    std::vector<double> v;
    for (std::int64_t k = 0; k < n_seeds; ++k) {
      const auto idx =
          static_cast<std::size_t>((arm * n + src) * n_seeds + k);
      const RunRecord& rec = result.records[idx];
      if (!rec.failed) v.push_back(rec.score(target, metric));
    }
    return v.empty() ? std::nan("") : percentile(v, 0.5);
  };

  Mat* mats[2][2] = {{&result.dci_d_baseline, &result.dci_i_baseline},
                     {&result.dci_d_weighted, &result.dci_i_weighted}};
  for (int arm = 0; arm < 2; ++arm)
    for (int m = 0; m < 2; ++m) *mats[arm][m] = Mat(n, n, 0.0);
  for (int arm = 0; arm < 2; ++arm)
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t t = 0; t < n; ++t) {
        const auto& target = result.labels[static_cast<std::size_t>(t)];
        (*mats[arm][0])(s, t) = cell_median(arm, s, target, "dci_d");
        (*mats[arm][1])(s, t) = cell_median(arm, s, target, "dci_i");
      }
  result.dci_d_diff = Mat(n, n, 0.0);
  result.dci_i_diff = Mat(n, n, 0.0);
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t t = 0; t < n; ++t) {
      result.dci_d_diff(s, t) =
          result.dci_d_weighted(s, t) - result.dci_d_baseline(s, t);
      result.dci_i_diff(s, t) =
          result.dci_i_weighted(s, t) - result.dci_i_baseline(s, t);
    }

  fs::create_directories(out_dir);
  const auto write_matrix = [&](const std::string& name, const Mat& m) {
    write_file_atomic(fs::path(out_dir) / ("transfer_" + name + ".csv"),
                      matrix_csv(result.labels, m));
  };
  write_matrix("dci_d_baseline", result.dci_d_baseline);
  write_matrix("dci_d_weighted", result.dci_d_weighted);
  write_matrix("dci_d_diff", result.dci_d_diff);
  write_matrix("dci_i_baseline", result.dci_i_baseline);
  write_matrix("dci_i_weighted", result.dci_i_weighted);
  write_matrix("dci_i_diff", result.dci_i_diff);
  write_file_atomic(fs::path(out_dir) / "transfer.json",
                    result.to_json().dump(2) + "\n");
  return result;
}

}  // namespace hfslab
