// Acceptance gate: one pass/fail line per criterion, tolerances pinned in
// code. Criterion 6 trains real models and takes minutes; --skip-training
// runs everything else, --only-training runs just criterion 6.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "hfslab/harness.hpp"
#include "hfslab/hfs_reference.hpp"
#include "test_support.hpp"

using namespace hfslab;
using hfslab::testing::central_diff;
using hfslab::testing::median_of;
using hfslab::testing::rel_err;
using hfslab::testing::separated_batch;
using hfslab::testing::tv_distance;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

Mat random_latents(std::int64_t b, std::int64_t k, Rng& rng) {
  Mat z(b, k);
  for (auto& v : z.a) v = rng.normal();
  return z;
}

// Latent values on a coarse grid: distances are multiples of spacing^2, so
// every min/max gap is either exactly zero or large against any small
// temperature.
Mat coarse_grid_batch(std::int64_t b, std::int64_t k, Rng& rng,
                      double spacing = 0.25, int levels = 6) {
  Mat z(b, k);
  for (auto& v : z.a)
    v = spacing *
        static_cast<double>(rng.uniform_int(static_cast<std::uint64_t>(levels)));
  return z;
}

// ---------------------------------------------------------------- criterion 1

bool criterion_estimator_oracle(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t b = 2 + static_cast<std::int64_t>(rng.uniform_int(15));
    const std::int64_t k = 2 + static_cast<std::int64_t>(rng.uniform_int(5));
    const Mat z = random_latents(b, k, rng);
    const PairSet ps = trial % 4 == 0
                           ? PairSet::draw(static_cast<int>(k), 2,
                                           static_cast<std::uint64_t>(trial))
                           : PairSet::all(static_cast<int>(k));
    for (HfsDistance dist :
         {HfsDistance::kSquaredEuclidean, HfsDistance::kEuclidean}) {
      const std::uint64_t sub_seed = 1000 + static_cast<std::uint64_t>(trial);
      const double errs[] = {
          std::fabs(hfs_pairwise(z, ps, dist) - ref_hfs_pairwise(z, ps, dist)),
          std::fabs(hfs_averaged(z, ps, dist) - ref_hfs_averaged(z, ps, dist)),
          std::fabs(hfs_softmin(z, ps, 0.3, dist) -
                    ref_hfs_softmin(z, ps, 0.3, dist)),
          std::fabs(hfs_soft(z, ps, 0.2, 0.5, dist) -
                    ref_hfs_soft(z, ps, 0.2, 0.5, dist)),
          std::fabs(hfs_subsampled(z, 64, dist, sub_seed) -
                    ref_hfs_subsampled(z, 64, dist, sub_seed))};
      for (double e : errs) worst = std::max(worst, e);
    }
  }
  const double secs = seconds_since(t0);
  detail = fmt("max abs err %.2e over 200 batches x 5 variants, %.1fs", worst,
               secs);
  return worst <= 1e-12 && secs < 10.0;
}

// ---------------------------------------------------------------- criterion 2

bool criterion_gradients(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int coords = 0;

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 101 + 3);

    // direct gradient of the pairwise criterion with respect to the latents
    {
      const Mat z0 = separated_batch(5, 3, rng);
      const PairSet ps = PairSet::all(3);
      for (HfsDistance dist :
           {HfsDistance::kSquaredEuclidean, HfsDistance::kEuclidean}) {
        Mat z = z0;
        Mat grad(z.rows, z.cols, 0.0);
        hfs_pairwise(z, ps, dist, &grad);
        for (std::size_t i = 0; i < z.a.size(); ++i) {
          const double fd = central_diff(
              &z.a[i], [&] { return hfs_pairwise(z, ps, dist); }, 1e-5);
          worst = std::max(worst, rel_err(grad.a[i], fd));
          ++coords;
        }
      }
    }

    // model-parameter gradients of the reconstruction, kl, and composite
    SaeConfig mc;
    mc.obs_dim = 5;
    mc.latent_dim = 3;
    mc.encoder_hidden = {8};
    mc.decoder_hidden = {8};
    SaeModel model(mc, seed);
    std::vector<double> xv(4 * 5);
    for (auto& v : xv) v = rng.normal();
    const std::uint64_t eps_seed = seed * 31 + 9;

    HfsConfig hc;
    hc.gamma = 2.0;
    hc.pairs_to_use = 3;
    const PairSet ps = PairSet::all(3);
    const double beta = 3.0;

    enum class Loss { kSae, kKl, kComposite };
    for (Loss which : {Loss::kSae, Loss::kKl, Loss::kComposite}) {
      auto build = [&](Tape& t) -> Tensor {
        Rng eps_rng(eps_seed);
        Tensor x = t.constant({4, 5}, xv);
        if (which == Loss::kComposite)
          return objective(t, model, x, hc, beta, eps_rng, ps).total;
        LatentBatch lb = model.encode(t, x, eps_rng);
        return which == Loss::kSae ? sae_loss(t, model, x, lb)
                                   : kl_term(t, lb);
      };
      for (auto* p : model.parameters()) p->zero_grad();
      {
        Tape t;
        t.backward(build(t));
      }
      for (auto* p : model.parameters())
        for (std::size_t i = 0; i < p->value.size(); ++i) {
          const double fd = central_diff(
              &p->value[i],
              [&] {
                Tape t;
                return build(t).item();
              },
              1e-5);
          worst = std::max(worst, rel_err(p->grad[i], fd));
          ++coords;
        }
    }
  }
  const double secs = seconds_since(t0);
  detail = fmt("max rel err %.2e over %.0f coordinates, %.1fs", worst,
               static_cast<double>(coords), secs);
  return worst < 1e-4 && secs < 60.0;
}

// ---------------------------------------------------------------- criterion 3

// The default five-factor world has too many cells for a 100k-sample
// plug-in estimate to resolve 0.02 total variation, so the kernel and the
// confounder mechanism are checked on reduced grids where the sampling
// noise floor sits below half the tolerance. The code path (enumerated
// joint -> inverse-CDF draws) is identical at every grid size.
bool criterion_sampler(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t n = 100000;
  double worst = 0.0;

  auto check = [&](const FactorSpec& spec, const CorrelationSpec& corr,
                   std::uint64_t seed) {
    const std::vector<double> joint = enumerate_joint(spec, corr);
    const IMat draws = sample_factors(spec, corr, n, seed);
    std::vector<std::int64_t> counts(joint.size(), 0);
    for (std::int64_t r = 0; r < draws.rows; ++r) {
      std::int64_t idx = 0;
      for (int f = 0; f < spec.k(); ++f)
        idx = idx * spec.cardinalities[static_cast<std::size_t>(f)] +
              draws(r, f);
      ++counts[static_cast<std::size_t>(idx)];
    }
    worst = std::max(worst, tv_distance(counts, joint));
  };

  FactorSpec pair_spec;
  pair_spec.cardinalities = {6, 6};
  std::uint64_t seed = 40;
  for (double sigma : {0.1, 0.2, 0.4, 0.7}) {
    CorrelationSpec corr;
    corr.label = "pair";
    corr.pairs = {CorrPair{0, 1, sigma, false}};
    check(pair_spec, corr, seed++);
  }

  FactorSpec conf_spec;
  conf_spec.cardinalities = {6, 6, 4};
  CorrelationSpec conf;
  conf.label = "conf";
  conf.confounder = Confounder{0, 0.2};
  check(conf_spec, conf, seed);

  const double secs = seconds_since(t0);
  detail = fmt("max total variation %.4f at n=100000, %.1fs", worst, secs);
  return worst <= 0.02 && secs < 30.0;
}

// ---------------------------------------------------------------- criterion 4

bool criterion_metric_extremes(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();

  WorldConfig wc;
  wc.spec = FactorSpec{{4, 4, 4}, {}};
  wc.observation_dim = 3;
  wc.mixing_depth = 0;
  wc.identity_mixing = true;
  wc.noise_scale = 0.0;
  const FactorWorld world(wc);
  const CorrelationSpec none;

  MetricConfig cfg;
  cfg.n_train = 2500;
  cfg.n_test = 1200;
  cfg.probe.gbt.n_trees = 40;
  cfg.mi.n_samples = 2500;
  cfg.betavae = true;
  cfg.factorvae = true;
  cfg.votes.n_train = 500;
  cfg.votes.n_test = 300;
  cfg.votes.pairs_per_vote = 16;
  cfg.hfs_batch_size = 256;

  const EncodeFn identity = [](const Mat& obs) { return obs; };
  const MetricReport gold =
      evaluate_representation(identity, world, none, cfg, 99);

  std::uint64_t call = 0;
  const EncodeFn noise = [&call](const Mat& obs) {
    Rng r(derive_seed(0xbadc0de, {call++}));
    Mat m(obs.rows, 3, 0.0);
    for (auto& v : m.a) v = r.normal();
    return m;
  };
  MetricConfig null_cfg = cfg;
  null_cfg.betavae = false;
  null_cfg.factorvae = false;
  const MetricReport nil =
      evaluate_representation(noise, world, none, null_cfg, 100);

  const bool ok = gold.scores.at("dci_d") > 0.95 &&
                  gold.scores.at("mig") > 0.9 &&
                  gold.scores.at("modularity") > 0.95 &&
                  gold.scores.at("sap") > 0.8 &&
                  gold.scores.at("betavae") > 0.95 &&
                  gold.scores.at("factorvae") > 0.95 &&
                  nil.scores.at("dci_d") < 0.1 && nil.scores.at("mig") < 0.05;
  const double secs = seconds_since(t0);
  detail = fmt("gold dci_d %.3f mig %.3f", gold.scores.at("dci_d"),
               gold.scores.at("mig")) +
           fmt(" mod %.3f sap %.3f", gold.scores.at("modularity"),
               gold.scores.at("sap")) +
           fmt(" bv %.3f fv %.3f", gold.scores.at("betavae"),
               gold.scores.at("factorvae")) +
           fmt("; null dci_d %.3f mig %.3f; %.0fs", nil.scores.at("dci_d"),
               nil.scores.at("mig"), secs);
  return ok && secs < 120.0;
}

// ---------------------------------------------------------------- criterion 5

bool criterion_dci_hand_cases(std::string& detail) {
  const std::vector<double> no_errors;
  const double identity =
      dci(Mat(2, 2, {1.0, 0.0, 0.0, 1.0}), no_errors).d;
  const double uniform =
      dci(Mat(2, 2, {0.5, 0.5, 0.5, 0.5}), no_errors).d;
  const double mixed = dci(Mat(2, 2, {1.0, 0.0, 0.5, 0.5}), no_errors).d;
  detail = fmt("identity %.17g, uniform %.17g, mixed %.17g", identity, uniform,
               mixed);
  return identity == 1.0 && uniform == 0.0 && mixed == 0.5;
}

// ---------------------------------------------------------------- criterion 6

// Desk-scale effect run: a gamma grid of support-factorization pressure
// (stabilized with the variance floor so the latent scale cannot collapse)
// against a beta grid of the plain objective, six seeds each, on the
// default world with one tightly correlated pair. Passing requires the
// best gamma cell to match or beat the best beta cell on held-out
// disentanglement, and the trained-in factorization score to fall strictly
// over at least three consecutive gamma points.
bool criterion_desk_scale_effect(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hfslab_acceptance_desk";
  fs::remove_all(dir);
  fs::create_directories(dir);

  RunConfig base = default_run_config();
  base.corr_train = correlation_preset("pair1");
  base.corr_eval = {correlation_preset("pair1"), correlation_preset("none")};
  base.steps = 3000;
  base.batch_size = 64;
  base.eval_every = 1000;
  base.n_train = 10000;
  base.beta = 1.0;
  base.hfs.pairs_to_use = 12;
  base.metrics.dci = true;
  base.metrics.hfs = true;
  base.metrics.mig = false;
  base.metrics.modularity = false;
  base.metrics.sap = false;

  GridConfig gamma_grid;
  gamma_grid.base = base;
  gamma_grid.base.hfs.scale_reg = ScaleRegMode::kVariance;
  gamma_grid.base.hfs.scale_weight = 1.0;
  gamma_grid.gammas = {0.3, 1.0, 3.0, 10.0};
  gamma_grid.seeds = {1, 2, 3, 4, 5, 6};

  GridConfig beta_grid;
  beta_grid.base = base;
  beta_grid.base.hfs.gamma = 0.0;
  beta_grid.betas = {0.5, 1.0, 2.0, 4.0};
  beta_grid.seeds = gamma_grid.seeds;

  const SweepResult gamma_res = sweep(gamma_grid, (dir / "gamma").string());
  const SweepResult beta_res = sweep(beta_grid, (dir / "beta").string());
  if (gamma_res.failed + beta_res.failed > 0) {
    detail = "training runs failed";
    return false;
  }

  auto cell_median = [](const SweepResult& res, const SweepCell& cell,
                        const std::string& label, const std::string& name) {
    std::vector<double> v;
    for (auto idx : cell.record_index)
      v.push_back(res.records[idx].score(label, name));
    return median_of(v);
  };

  double best_gamma_dci = -1.0, best_beta_dci = -1.0;
  std::vector<double> train_hfs;  // per gamma cell, ascending gamma
  for (const auto& cell : gamma_res.cells) {
    best_gamma_dci = std::max(best_gamma_dci,
                              cell_median(gamma_res, cell, "none", "dci_d"));
    train_hfs.push_back(cell_median(gamma_res, cell, "pair1", "hfs"));
  }
  for (const auto& cell : beta_res.cells)
    best_beta_dci =
        std::max(best_beta_dci, cell_median(beta_res, cell, "none", "dci_d"));

  std::size_t run = 1, best_run = 1;
  for (std::size_t i = 1; i < train_hfs.size(); ++i) {
    run = train_hfs[i] < train_hfs[i - 1] ? run + 1 : 1;
    best_run = std::max(best_run, run);
  }

  const double secs = seconds_since(t0);
  detail = fmt("best-gamma dci_d %.3f vs best-beta %.3f, ", best_gamma_dci,
               best_beta_dci) +
           fmt("hfs medians falling over %.0f consecutive gamma points, %.0fs",
               static_cast<double>(best_run), secs);
  return best_gamma_dci >= best_beta_dci && best_run >= 3 && secs < 1800.0;
}

// ---------------------------------------------------------------- criterion 7

bool criterion_degeneration(std::string& detail) {
  bool ok = true;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SaeConfig mc;
    mc.obs_dim = 6;
    mc.latent_dim = 3;
    mc.encoder_hidden = {8};
    mc.decoder_hidden = {8};
    SaeModel model(mc, seed);
    Rng data_rng(seed + 100);
    std::vector<double> xv(4 * 6);
    for (auto& v : xv) v = data_rng.normal();
    const PairSet ps = PairSet::all(3);
    HfsConfig hc;
    hc.gamma = 0.0;
    const std::uint64_t eps_seed = seed * 7 + 1;

    // gamma = 0: exactly the KL-weighted autoencoder loss
    {
      Rng eps_a(eps_seed);
      Tape ta;
      const Tensor xa = ta.constant({4, 6}, xv);
      const auto parts = objective(ta, model, xa, hc, 3.0, eps_a, ps);

      Rng eps_b(eps_seed);
      Tape tb;
      const Tensor xb = tb.constant({4, 6}, xv);
      LatentBatch lb = model.encode(tb, xb, eps_b);
      const Tensor plain =
          add(sae_loss(tb, model, xb, lb), mul(kl_term(tb, lb), 3.0));
      ok = ok && parts.total.item() == plain.item();
    }

    // gamma = beta = 0: exactly the reconstruction loss
    {
      Rng eps_a(eps_seed);
      Tape ta;
      const Tensor xa = ta.constant({4, 6}, xv);
      const auto parts = objective(ta, model, xa, hc, 0.0, eps_a, ps);

      Rng eps_b(eps_seed);
      Tape tb;
      const Tensor xb = tb.constant({4, 6}, xv);
      LatentBatch lb = model.encode(tb, xb, eps_b);
      ok = ok && parts.total.item() == sae_loss(tb, model, xb, lb).item();
    }
  }
  detail = "bit-equality over 3 seeded models";
  return ok;
}

// ---------------------------------------------------------------- criterion 8

// Soft-inner mean over all product tuples: the averaged estimator with the
// hard inner minimum replaced by a tau1 softmin, written longhand.
double soft_inner_averaged(const Mat& z, const PairSet& pairs, double tau1,
                           HfsDistance dist) {
  auto point_dist = [&](double a, double b, double c, double d) {
    const double di = a - c, dj = b - d;
    const double sq = di * di + dj * dj;
    return dist == HfsDistance::kSquaredEuclidean ? sq : std::sqrt(sq);
  };
  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    double mean = 0.0;
    for (std::int64_t a = 0; a < z.rows; ++a)
      for (std::int64_t b = 0; b < z.rows; ++b) {
        double mn = std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < z.rows; ++c)
          mn = std::min(mn, point_dist(z(a, i), z(b, j), z(c, i), z(c, j)));
        double norm = 0.0, acc = 0.0;
        for (std::int64_t c = 0; c < z.rows; ++c) {
          const double d = point_dist(z(a, i), z(b, j), z(c, i), z(c, j));
          const double e = std::exp(-(d - mn) / tau1);
          norm += e;
          acc += e * d;
        }
        mean += acc / norm;
      }
    total += mean / static_cast<double>(z.rows * z.rows);
  }
  return total;
}

bool criterion_soft_limits(std::string& detail) {
  Rng rng(19);
  double worst_hard = 0.0, worst_softmin = 0.0, worst_mean = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    const std::int64_t b = 4 + static_cast<std::int64_t>(rng.uniform_int(4));
    const std::int64_t k = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
    const Mat z = coarse_grid_batch(b, k, rng);
    const PairSet ps = PairSet::all(static_cast<int>(k));
    const HfsDistance dist = HfsDistance::kSquaredEuclidean;
    const double hard = hfs_pairwise(z, ps, dist);

    worst_hard =
        std::max(worst_hard, std::fabs(hfs_soft(z, ps, 1e-4, 1e-4, dist) - hard));
    worst_softmin =
        std::max(worst_softmin, std::fabs(hfs_softmin(z, ps, 1e-4, dist) - hard));
    worst_mean = std::max(
        worst_mean, std::fabs(hfs_soft(z, ps, 0.3, 1e3, dist) -
                              soft_inner_averaged(z, ps, 0.3, dist)));
  }
  detail = fmt("soft->pairwise %.2e, softmin->pairwise %.2e, "
               "soft(outer hot)->soft-inner mean %.2e",
               worst_hard, worst_softmin, worst_mean);
  return worst_hard <= 1e-4 && worst_softmin <= 1e-6 && worst_mean <= 1e-3;
}

// ---------------------------------------------------------------- criterion 9

bool criterion_sweep_reproducibility(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;

  RunConfig base;
  WorldConfig w;
  w.spec = FactorSpec{{4, 4}, {}};
  w.observation_dim = 6;
  w.mixing_depth = 2;
  w.noise_scale = 0.01;
  base.world = w;
  base.corr_train = correlation_preset("none");
  base.corr_eval = {correlation_preset("none")};
  base.model.obs_dim = 6;
  base.model.latent_dim = 4;
  base.model.encoder_hidden = {16};
  base.model.decoder_hidden = {16};
  base.hfs.pairs_to_use = 6;
  base.optim.lr = 1e-3;
  base.steps = 60;
  base.batch_size = 16;
  base.eval_every = 30;
  base.n_train = 512;
  base.metrics.dci = false;
  base.metrics.mig = false;
  base.metrics.modularity = false;
  base.metrics.sap = false;
  base.metrics.hfs = true;
  base.metrics.n_train = 256;
  base.metrics.n_test = 128;

  GridConfig grid;
  grid.base = base;
  grid.gammas = {0.0, 2.0};
  grid.seeds = {1, 2};

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  };

  const fs::path a = fs::temp_directory_path() / "hfslab_acceptance_rep_a";
  const fs::path b = fs::temp_directory_path() / "hfslab_acceptance_rep_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const SweepResult ra = sweep(grid, a.string());
  const SweepResult rb = sweep(grid, b.string());
  const std::string bytes_a = slurp(ra.aggregate_path);
  const bool identical = !bytes_a.empty() && bytes_a == slurp(rb.aggregate_path);
  fs::remove_all(a);
  fs::remove_all(b);

  detail = fmt("%.0f-byte aggregate identical across invocations, %.1fs",
               static_cast<double>(bytes_a.size()), seconds_since(t0));
  return identical;
}

struct Criterion {
  int number;
  const char* label;
  bool training;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  bool skip_training = false, only_training = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--skip-training") == 0) skip_training = true;
    if (std::strcmp(argv[i], "--only-training") == 0) only_training = true;
  }

  const std::vector<Criterion> criteria = {
      {1, "estimators match brute-force references", false,
       criterion_estimator_oracle},
      {2, "analytic gradients match finite differences", false,
       criterion_gradients},
      {3, "correlated sampler matches enumerated joint", false,
       criterion_sampler},
      {4, "metric extremes on gold and null representations", false,
       criterion_metric_extremes},
      {5, "disentanglement-weighting hand cases exact", false,
       criterion_dci_hand_cases},
      {6, "factorization pressure improves held-out disentanglement", true,
       criterion_desk_scale_effect},
      {7, "objective degenerates bitwise when weights vanish", false,
       criterion_degeneration},
      {8, "soft variants reach their limit forms", false,
       criterion_soft_limits},
      {9, "sweep emits byte-identical aggregates", false,
       criterion_sweep_reproducibility},
  };

  bool all_ok = true;
  for (const auto& c : criteria) {
    if ((c.training && skip_training) || (!c.training && only_training))
      continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %d. %s (%s)\n", ok ? "PASS" : "FAIL", c.number, c.label,
                detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
