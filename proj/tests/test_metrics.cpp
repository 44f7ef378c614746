#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "hfslab/factor_world.hpp"
#include "hfslab/metrics.hpp"
#include "hfslab/models.hpp"
#include "hfslab/probes.hpp"
#include "hfslab/rng.hpp"

using namespace hfslab;

namespace {

Mat random_mat(std::int64_t r, std::int64_t c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c, 0.0);
  for (auto& v : m.a) v = rng.normal();
  return m;
}

// A world whose observations are exactly the normalized factors.
FactorWorld identity_world(std::vector<std::int32_t> cards) {
  WorldConfig wc;
  wc.spec = FactorSpec{std::move(cards), {}};
  wc.observation_dim = wc.spec.k();
  wc.mixing_depth = 0;
  wc.identity_mixing = true;
  wc.noise_scale = 0.0;
  return FactorWorld(wc);
}

EncodeFn identity_encode() {
  return [](const Mat& obs) { return obs; };
}

}  // namespace

TEST_CASE("equal-frequency binning splits sorted data evenly") {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 0.0);
  const auto code = equal_frequency_bins(v, 2);
  for (int i = 0; i < 5; ++i) CHECK(code[static_cast<std::size_t>(i)] == 0);
  for (int i = 5; i < 10; ++i) CHECK(code[static_cast<std::size_t>(i)] == 1);

  const auto fine = equal_frequency_bins(v, 5);
  CHECK(fine[0] == 0);
  CHECK(fine[9] == 4);
}

TEST_CASE("equal values always land in the same bin") {
  const auto all_same = equal_frequency_bins({3.0, 3.0, 3.0, 3.0}, 2);
  CHECK(std::all_of(all_same.begin(), all_same.end(),
                    [&](int c) { return c == all_same[0]; }));

  const auto split = equal_frequency_bins({1.0, 1.0, 2.0, 2.0}, 2);
  CHECK(split[0] == split[1]);
  CHECK(split[2] == split[3]);
  CHECK(split[0] != split[2]);

  // three copies straddle the midpoint: the straddler joins its twins
  const auto straddle = equal_frequency_bins({1.0, 1.0, 1.0, 2.0}, 2);
  CHECK(straddle[0] == straddle[2]);
  CHECK(straddle[3] > straddle[0]);

  CHECK_THROWS_AS(equal_frequency_bins({1.0}, 1), ConfigError);
}

TEST_CASE("discrete mutual information matches hand values") {
  // perfectly dependent, uniform over 2 symbols
  std::vector<int> a{0, 0, 1, 1}, b{0, 0, 1, 1};
  CHECK(discrete_mi(a, b, 2, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(discrete_entropy(a, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // independent uniform
  std::vector<int> c{0, 1, 0, 1};
  CHECK(discrete_mi(a, c, 2, 2) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(discrete_mi({0}, {0, 1}, 2, 2), ConfigError);
}

TEST_CASE("discrete mutual information is symmetric and bounded") {
  Rng rng(91);
  std::vector<int> a(500), b(500);
  for (auto& v : a) v = static_cast<int>(rng.uniform_int(4));
  for (std::size_t i = 0; i < b.size(); ++i)
    b[i] = rng.uniform() < 0.7 ? a[i] % 3 : static_cast<int>(rng.uniform_int(3));
  const double ab = discrete_mi(a, b, 4, 3);
  const double ba = discrete_mi(b, a, 3, 4);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab >= 0.0);
  CHECK(ab <= discrete_entropy(a, 4) + 1e-12);
  CHECK(ab <= discrete_entropy(b, 3) + 1e-12);
}

TEST_CASE("disentanglement score hand cases") {
  // identity importance: each dimension serves exactly one factor
  const Mat identity(2, 2, {1.0, 0.0, 0.0, 1.0});
  const DciResult full = dci(identity, {});
  CHECK(full.d == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(full.c == doctest::Approx(1.0).epsilon(1e-12));

  // uniform importance carries no assignment information
  const Mat uniform(2, 2, {0.5, 0.5, 0.5, 0.5});
  CHECK(dci(uniform, {}).d == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(dci(uniform, {}).c == doctest::Approx(0.0).epsilon(1e-12));

  // one clean row, one split row, equal row masses: D = 1/2 exactly
  const Mat half(2, 2, {1.0, 0.0, 0.5, 0.5});
  CHECK(dci(half, {}).d == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("informativeness averages normalized errors and clamps") {
  const Mat r(2, 2, {1.0, 0.0, 0.0, 1.0});
  CHECK(dci(r, {0.0, 0.0}).i == doctest::Approx(1.0));
  CHECK(dci(r, {1.0, 1.0}).i == doctest::Approx(0.0));
  CHECK(dci(r, {0.25, 0.75}).i == doctest::Approx(0.5));
  CHECK(dci(r, {2.0, 2.0}).i == doctest::Approx(0.0));  // worse than chance clamps
  CHECK(dci(r, {}).i == doctest::Approx(0.0));          // no probe errors supplied
  CHECK(dci(r, {0.25, 0.75}).per_factor_error == std::vector<double>{0.25, 0.75});
}

TEST_CASE("zero-importance rows carry zero weight") {
  const Mat r(2, 2, {1.0, 0.0, 0.0, 0.0});
  CHECK(dci(r, {}).d == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("disentanglement score is invariant to permutation and scale") {
  Rng rng(17);
  Mat r(5, 3, 0.0);
  for (auto& v : r.a) v = rng.uniform();
  const DciResult base = dci(r, {});

  Mat rows_swapped = r;
  for (std::int64_t j = 0; j < r.cols; ++j)
    std::swap(rows_swapped(0, j), rows_swapped(3, j));
  CHECK(dci(rows_swapped, {}).d == doctest::Approx(base.d).epsilon(1e-12));
  CHECK(dci(rows_swapped, {}).c == doctest::Approx(base.c).epsilon(1e-12));

  Mat cols_swapped = r;
  for (std::int64_t i = 0; i < r.rows; ++i)
    std::swap(cols_swapped(i, 0), cols_swapped(i, 2));
  CHECK(dci(cols_swapped, {}).d == doctest::Approx(base.d).epsilon(1e-12));

  Mat scaled = r;
  for (auto& v : scaled.a) v *= 7.5;
  CHECK(dci(scaled, {}).d == doctest::Approx(base.d).epsilon(1e-12));
  CHECK(dci(scaled, {}).c == doctest::Approx(base.c).epsilon(1e-12));
}

TEST_CASE("disentanglement score rejects bad importance matrices") {
  CHECK_THROWS_AS(dci(Mat(2, 2, 0.0), {}), ContractError);
  CHECK_THROWS_AS(dci(Mat(2, 2, {1.0, -0.1, 0.0, 1.0}), {}), ConfigError);
  CHECK_THROWS_AS(dci(Mat(2, 1, 1.0), {}), ConfigError);
}

TEST_CASE("single-dimension representations are trivially complete") {
  const Mat r(1, 2, {0.5, 0.5});
  const DciResult res = dci(r, {});
  CHECK(res.d == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.c == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mutual-information matrix recovers the identity map") {
  const FactorWorld world = identity_world({4, 4, 4});
  const CorrelationSpec none;
  const FactorDataset data = sample_dataset(world, none, 8000, 555);
  MiConfig cfg;
  cfg.n_samples = 8000;
  const MiMatrix mi = mi_matrix(data.normalized, data.factors, world.spec(), cfg, 1);
  REQUIRE(mi.m.rows == 3);
  REQUIRE(mi.m.cols == 3);
  const double h4 = std::log(4.0);
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(mi.factor_entropy[static_cast<std::size_t>(i)] ==
          doctest::Approx(h4).epsilon(0.01));
    for (std::int64_t j = 0; j < 3; ++j) {
      if (i == j)
        CHECK(mi.m(i, j) == doctest::Approx(h4).epsilon(0.02));
      else
        CHECK(mi.m(i, j) < 0.05);  // estimator bias only
    }
  }
}

TEST_CASE("mutual-information bias on independent data stays below 0.05 nats") {
  const FactorWorld world = identity_world({4, 4});
  const CorrelationSpec none;
  const FactorDataset data = sample_dataset(world, none, 10000, 9182);
  const Mat noise = random_mat(10000, 2, 777);
  const MiMatrix mi = mi_matrix(noise, data.factors, world.spec(), MiConfig{}, 3);
  for (double v : mi.m.a) {
    CHECK(v >= 0.0);
    CHECK(v < 0.05);
  }
}

TEST_CASE("mutual-information matrix subsamples deterministically") {
  const FactorWorld world = identity_world({4, 4});
  const CorrelationSpec none;
  const FactorDataset data = sample_dataset(world, none, 3000, 77);
  MiConfig cfg;
  cfg.n_samples = 1000;
  const MiMatrix a = mi_matrix(data.normalized, data.factors, world.spec(), cfg, 5);
  const MiMatrix b = mi_matrix(data.normalized, data.factors, world.spec(), cfg, 5);
  CHECK(a.m.a == b.m.a);
  const MiMatrix c = mi_matrix(data.normalized, data.factors, world.spec(), cfg, 6);
  CHECK(a.m.a != c.m.a);  // different subsample
}

TEST_CASE("information gap hits its extremes on gold and null data") {
  const FactorWorld world = identity_world({4, 4, 4});
  const CorrelationSpec none;
  const FactorDataset data = sample_dataset(world, none, 10000, 31);

  std::vector<std::string> warnings;
  const double gold = mig(data.normalized, data.factors, world.spec(),
                          MiConfig{}, 2, &warnings);
  CHECK(gold > 0.95);
  CHECK(warnings.empty());

  const Mat noise = random_mat(10000, 3, 404);
  const double null_score =
      mig(noise, data.factors, world.spec(), MiConfig{}, 2, nullptr);
  CHECK(null_score < 0.05);
  CHECK(null_score >= 0.0);
}

TEST_CASE("information gap excludes zero-entropy factors") {
  MiMatrix mi;
  mi.m = Mat(2, 2, {1.0, 0.0, 0.2, 0.0});
  mi.factor_entropy = {std::log(4.0), 0.0};
  std::vector<std::string> warnings;
  const double score = mig_from_mi(mi, &warnings);
  // only factor 0 contributes: (1.0 - 0.2) / log 4
  CHECK(score == doctest::Approx(0.8 / std::log(4.0)).epsilon(1e-12));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("zero entropy") != std::string::npos);

  mi.factor_entropy = {0.0, 0.0};
  CHECK_THROWS_AS(mig_from_mi(mi, nullptr), ContractError);
}

TEST_CASE("modularity hand cases") {
  CHECK(modularity(Mat(2, 2, {1.0, 0.0, 0.0, 1.0}), nullptr) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // one dimension splits evenly between two of three factors
  const Mat split(1, 3, {1.0, 1.0, 0.0});
  CHECK(modularity(split, nullptr) == doctest::Approx(0.5).epsilon(1e-12));

  // uniform row: sum of (k-1) unit ratios over (k-1) -> score 0
  const Mat flat(1, 3, {1.0, 1.0, 1.0});
  CHECK(modularity(flat, nullptr) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("modularity flags silent dimensions and stays in range") {
  std::vector<std::string> warnings;
  const Mat silent(2, 2, {1.0, 0.0, 0.0, 0.0});
  CHECK(modularity(silent, &warnings) == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("zero mutual information") != std::string::npos);

  Rng rng(5);
  Mat r(6, 4, 0.0);
  for (auto& v : r.a) v = rng.uniform();
  const double score = modularity(r, nullptr);
  CHECK(score >= 0.0);
  CHECK(score <= 1.0);

  CHECK_THROWS_AS(modularity(Mat(2, 1, 1.0), nullptr), ConfigError);
}

TEST_CASE("attribute-predictability gap hand cases") {
  Rng rng(1234);
  const std::int64_t n = 2000;
  Mat y(n, 1, 0.0);
  for (auto& v : y.a) v = rng.uniform();

  // one aligned dimension plus one noise dimension: gap near 1
  Mat z(n, 2, 0.0);
  for (std::int64_t r = 0; r < n; ++r) {
    z(r, 0) = y(r, 0);
    z(r, 1) = rng.normal();
  }
  CHECK(sap(z, y) > 0.99);

  // duplicated dimensions tie: gap exactly 0
  Mat dup(n, 2, 0.0);
  for (std::int64_t r = 0; r < n; ++r) dup(r, 0) = dup(r, 1) = y(r, 0);
  CHECK(sap(dup, y) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK(sap(random_mat(500, 3, 8), random_mat(500, 2, 9)) >= 0.0);
  CHECK(sap(random_mat(500, 3, 8), random_mat(500, 2, 9)) <= 1.0);
  CHECK_THROWS_AS(sap(Mat(3, 2, 0.0), Mat(4, 2, 0.0)), ConfigError);
}

TEST_CASE("tree probe solves a two-point regression exactly") {
  GbtConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 1;
  cfg.shrinkage = 1.0;
  cfg.min_leaf = 1;
  const Mat x(2, 1, {0.0, 1.0});
  GbtRegressor gbt;
  gbt.fit(x, {0.0, 1.0}, cfg);
  const auto pred = gbt.predict(x);
  CHECK(pred[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pred[1] == doctest::Approx(1.0).epsilon(1e-12));
  // split gain on centered residuals: 0.25 + 0.25 - 0
  CHECK(gbt.importances()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tree probe concentrates importance on the informative feature") {
  Rng rng(2);
  const std::int64_t n = 800;
  Mat x(n, 3, 0.0);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) {
    x(r, 0) = rng.uniform();
    x(r, 1) = rng.normal();
    x(r, 2) = rng.normal();
    y[static_cast<std::size_t>(r)] = x(r, 0);
  }
  GbtConfig cfg;
  cfg.n_trees = 60;
  GbtRegressor gbt;
  gbt.fit(x, y, cfg);
  const auto& imp = gbt.importances();
  const double total = imp[0] + imp[1] + imp[2];
  CHECK(imp[0] / total > 0.95);

  const auto pred = gbt.predict(x);
  double sse = 0, var = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    sse += (pred[static_cast<std::size_t>(r)] - y[static_cast<std::size_t>(r)]) *
           (pred[static_cast<std::size_t>(r)] - y[static_cast<std::size_t>(r)]);
    var += (y[static_cast<std::size_t>(r)] - 0.5) * (y[static_cast<std::size_t>(r)] - 0.5);
  }
  CHECK(sse / var < 0.05);
}

TEST_CASE("linear probe recovers a sparse linear signal") {
  Rng rng(3);
  const std::int64_t n = 600;
  Mat x(n, 4, 0.0);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t c = 0; c < 4; ++c) x(r, c) = rng.normal();
    y[static_cast<std::size_t>(r)] = 2.0 * x(r, 1);
  }
  LinearProbe probe;
  probe.fit(x, y, LassoConfig{0.01, 1000, 1e-10});
  const auto& imp = probe.importances();
  const double total = imp[0] + imp[1] + imp[2] + imp[3];
  CHECK(imp[1] / total > 0.95);
  const auto pred = probe.predict(x);
  double sse = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    const double e = pred[static_cast<std::size_t>(r)] - y[static_cast<std::size_t>(r)];
    sse += e * e;
  }
  CHECK(sse / static_cast<double>(n) < 0.05);
}

TEST_CASE("probe fits are deterministic") {
  const FactorWorld world = identity_world({4, 4});
  const CorrelationSpec none;
  const FactorDataset data = sample_dataset(world, none, 400, 10);
  const ProbeSet a = fit_probes(data.normalized, data.normalized, ProbeConfig{}, 1);
  const ProbeSet b = fit_probes(data.normalized, data.normalized, ProbeConfig{}, 1);
  CHECK(a.importance.a == b.importance.a);
  CHECK(a.importance.rows == 2);
  CHECK(a.importance.cols == 2);
}

TEST_CASE("probe fitting rejects tiny datasets and flags constant factors") {
  CHECK_THROWS_AS(fit_probes(Mat(50, 2, 1.0), Mat(50, 1, 0.5), ProbeConfig{}, 1),
                  ConfigError);

  const Mat z = random_mat(200, 2, 6);
  const ProbeSet set = fit_probes(z, Mat(200, 1, 0.25), ProbeConfig{}, 1);
  REQUIRE(set.per_factor.size() == 1);
  CHECK(set.per_factor[0].degenerate);
  for (double v : set.importance.a) CHECK(v == 0.0);
  const auto pred = set.per_factor[0].predict(z);
  CHECK(pred[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("intervention vote scores hit gold and chance constructions") {
  const FactorWorld world = identity_world({4, 4, 4, 4});
  const CorrelationSpec none;
  VoteScoreConfig votes;
  votes.n_train = 600;
  votes.n_test = 400;
  votes.pairs_per_vote = 16;

  const double beta_gold = betavae_score(world, none, identity_encode(), votes, 71);
  CHECK(beta_gold > 0.95);
  const double factor_gold = factorvae_score(world, none, identity_encode(), votes, 71);
  CHECK(factor_gold > 0.95);

  EncodeFn constant = [](const Mat& obs) { return Mat(obs.rows, 4, 0.0); };
  const double beta_null = betavae_score(world, none, constant, votes, 72);
  CHECK(beta_null < 0.5);  // chance is 1/4
  const double factor_null = factorvae_score(world, none, constant, votes, 72);
  CHECK(factor_null < 0.5);

  VoteScoreConfig bad = votes;
  bad.n_train = 0;
  CHECK_THROWS_AS(betavae_score(world, none, identity_encode(), bad, 1), ConfigError);
  CHECK_THROWS_AS(factorvae_score(world, none, identity_encode(), bad, 1), ConfigError);
}

TEST_CASE("vote scores are deterministic given the seed") {
  const FactorWorld world = identity_world({4, 4});
  const CorrelationSpec none;
  VoteScoreConfig votes;
  votes.n_train = 200;
  votes.n_test = 100;
  votes.pairs_per_vote = 8;
  const double a = betavae_score(world, none, identity_encode(), votes, 5);
  const double b = betavae_score(world, none, identity_encode(), votes, 5);
  CHECK(a == b);
  const double fa = factorvae_score(world, none, identity_encode(), votes, 5);
  const double fb = factorvae_score(world, none, identity_encode(), votes, 5);
  CHECK(fa == fb);
}

namespace {

MetricConfig small_metric_config(bool with_votes) {
  MetricConfig cfg;
  cfg.n_train = 2500;
  cfg.n_test = 1200;
  cfg.probe.gbt.n_trees = 40;
  cfg.mi.n_samples = 2500;
  cfg.betavae = with_votes;
  cfg.factorvae = with_votes;
  cfg.votes.n_train = 500;
  cfg.votes.n_test = 300;
  cfg.votes.pairs_per_vote = 16;
  return cfg;
}

}  // namespace

TEST_CASE("full evaluation scores a gold identity representation near 1") {
  const FactorWorld world = identity_world({4, 4, 4});
  const CorrelationSpec none;
  MetricConfig cfg = small_metric_config(true);
  // batches of 64 can miss cells of the 4x4 product grids by chance; 256
  // samples per batch make the factorized-support estimate effectively exact
  cfg.hfs_batch_size = 256;
  const MetricReport report =
      evaluate_representation(identity_encode(), world, none, cfg, 99);

  CHECK(report.scores.at("dci_d") > 0.95);
  CHECK(report.scores.at("dci_c") > 0.95);
  CHECK(report.scores.at("dci_i") > 0.9);
  CHECK(report.scores.at("mig") > 0.9);
  CHECK(report.scores.at("modularity") > 0.95);
  CHECK(report.scores.at("sap") > 0.8);
  CHECK(report.scores.at("betavae") > 0.95);
  CHECK(report.scores.at("factorvae") > 0.95);
  CHECK(report.scores.at("hfs") < 0.01);
  CHECK(report.warnings.empty());
  CHECK(report.importance.rows == 3);
  CHECK(report.importance.cols == 3);
  REQUIRE(report.per_factor_error.size() == 3);
  for (double e : report.per_factor_error) CHECK(e < 0.1);
}

TEST_CASE("full evaluation scores a factor-independent representation near 0") {
  const FactorWorld world = identity_world({4, 4, 4});
  const CorrelationSpec none;
  // deterministic noise unrelated to the observations
  std::uint64_t call = 0;
  EncodeFn noise_encode = [&call](const Mat& obs) {
    return random_mat(obs.rows, 3, derive_seed(0xbadc0de, {call++}));
  };
  const MetricReport report = evaluate_representation(
      noise_encode, world, none, small_metric_config(false), 100);

  CHECK(report.scores.at("dci_d") < 0.1);
  CHECK(report.scores.at("dci_i") < 0.1);
  CHECK(report.scores.at("mig") < 0.05);
  for (double e : report.per_factor_error) CHECK(e > 0.8);
}

TEST_CASE("metric reports round-trip through JSON") {
  const FactorWorld world = identity_world({4, 4});
  const CorrelationSpec none;
  MetricConfig cfg = small_metric_config(false);
  cfg.n_train = 800;
  cfg.n_test = 400;
  cfg.mi.n_samples = 800;
  const MetricReport report =
      evaluate_representation(identity_encode(), world, none, cfg, 7);
  const MetricReport back = MetricReport::from_json(report.to_json());
  CHECK(back.scores == report.scores);
  CHECK(back.importance.a == report.importance.a);
  CHECK(back.mi.a == report.mi.a);
  CHECK(back.per_factor_error == report.per_factor_error);
  CHECK(back.warnings == report.warnings);
}

TEST_CASE("evaluation is deterministic and model wrapper matches the lambda") {
  const FactorWorld world = identity_world({4, 4});
  const CorrelationSpec none;
  MetricConfig cfg = small_metric_config(false);
  cfg.n_train = 800;
  cfg.n_test = 400;
  cfg.mi.n_samples = 800;

  const MetricReport a = evaluate_representation(identity_encode(), world, none, cfg, 3);
  const MetricReport b = evaluate_representation(identity_encode(), world, none, cfg, 3);
  CHECK(a.scores == b.scores);

  SaeConfig mc;
  mc.obs_dim = 2;
  mc.latent_dim = 2;
  mc.encoder_hidden = {8};
  mc.decoder_hidden = {8};
  SaeModel model(mc, 11);
  const MetricReport via_model = evaluate_all(model, world, none, cfg, 3);
  EncodeFn enc = [&model](const Mat& x) { return model.encode_means(x); };
  const MetricReport via_lambda = evaluate_representation(enc, world, none, cfg, 3);
  CHECK(via_model.scores == via_lambda.scores);
}
