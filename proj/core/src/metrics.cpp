#include "hfslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hfslab/hfs.hpp"
#include "hfslab/rng.hpp"

namespace hfslab {

namespace {

nlohmann::json mat_to_json(const Mat& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

Mat mat_from_json(const nlohmann::json& j) {
  Mat m;
  m.rows = j.at("rows").get<std::int64_t>();
  m.cols = j.at("cols").get<std::int64_t>();
  m.a = j.at("data").get<std::vector<double>>();
  if (static_cast<std::int64_t>(m.a.size()) != m.rows * m.cols)
    throw ContractError("metric report: matrix size mismatch");
  return m;
}

std::vector<double> column_of(const Mat& m, std::int64_t c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows));
  for (std::int64_t r = 0; r < m.rows; ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

double variance_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                      static_cast<double>(v.size());
  double acc = 0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

}  // namespace

double discrete_entropy(const std::vector<int>& a, int na) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(na), 0);
  for (int v : a) counts[static_cast<std::size_t>(v)]++;
  const double n = static_cast<double>(a.size());
  double h = 0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  return h;
}

double discrete_mi(const std::vector<int>& a, const std::vector<int>& b,
                   int na, int nb) {
  if (a.size() != b.size()) throw ConfigError("discrete_mi: length mismatch");
  std::vector<std::int64_t> joint(static_cast<std::size_t>(na * nb), 0);
  std::vector<std::int64_t> ca(static_cast<std::size_t>(na), 0);
  std::vector<std::int64_t> cb(static_cast<std::size_t>(nb), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<std::size_t>(a[i] * nb + b[i])]++;
    ca[static_cast<std::size_t>(a[i])]++;
    cb[static_cast<std::size_t>(b[i])]++;
  }
  const double n = static_cast<double>(a.size());
  double mi = 0;
  for (int x = 0; x < na; ++x)
    for (int y = 0; y < nb; ++y) {
      const auto c = joint[static_cast<std::size_t>(x * nb + y)];
      if (c == 0) continue;
      const double pxy = static_cast<double>(c) / n;
      const double px = static_cast<double>(ca[static_cast<std::size_t>(x)]) / n;
      const double py = static_cast<double>(cb[static_cast<std::size_t>(y)]) / n;
      mi += pxy * std::log(pxy / (px * py));
    }
  return std::max(mi, 0.0);
}

std::vector<int> equal_frequency_bins(const std::vector<double>& v, int bins) {
  if (bins < 2) throw ConfigError("equal_frequency_bins: need at least 2 bins");
  const auto n = static_cast<std::int64_t>(v.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
    if (v[static_cast<std::size_t>(x)] != v[static_cast<std::size_t>(y)])
      return v[static_cast<std::size_t>(x)] < v[static_cast<std::size_t>(y)];
    return x < y;
  });
  std::vector<int> code(static_cast<std::size_t>(n), 0);
  for (std::int64_t pos = 0; pos < n; ++pos) {
    const auto row = static_cast<std::size_t>(order[static_cast<std::size_t>(pos)]);
    int c = static_cast<int>(pos * bins / n);
    // equal values never straddle a bin boundary
    if (pos > 0) {
      const auto prev = static_cast<std::size_t>(order[static_cast<std::size_t>(pos - 1)]);
      if (v[row] == v[prev]) c = code[prev];
    }
    code[row] = c;
  }
  return code;
}

MiMatrix mi_matrix(const Mat& z, const IMat& factors, const FactorSpec& spec,
                   const MiConfig& cfg, std::uint64_t seed) {
  if (z.rows != factors.rows) throw ConfigError("mi_matrix: row count mismatch");
  if (factors.cols != spec.k()) throw ConfigError("mi_matrix: factor count mismatch");
  const std::int64_t n = std::min<std::int64_t>(z.rows, cfg.n_samples);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(z.rows));
  std::iota(rows.begin(), rows.end(), 0);
  if (n < z.rows) {
    Rng rng(derive_seed(seed, {0x6d69}));
    rng.shuffle(rows);
    rows.resize(static_cast<std::size_t>(n));
  }

  const std::int64_t d = z.cols, k = factors.cols;
  std::vector<std::vector<int>> zcodes(static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < d; ++i) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r)
      col[static_cast<std::size_t>(r)] = z(rows[static_cast<std::size_t>(r)], i);
    zcodes[static_cast<std::size_t>(i)] = equal_frequency_bins(col, cfg.bins);
  }
  std::vector<std::vector<int>> fcodes(static_cast<std::size_t>(k));
  for (std::int64_t j = 0; j < k; ++j) {
    auto& col = fcodes[static_cast<std::size_t>(j)];
    col.resize(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r)
      col[static_cast<std::size_t>(r)] =
          factors(rows[static_cast<std::size_t>(r)], j);
  }

  MiMatrix out;
  out.m = Mat(d, k, 0.0);
  out.factor_entropy.resize(static_cast<std::size_t>(k));
  for (std::int64_t j = 0; j < k; ++j)
    out.factor_entropy[static_cast<std::size_t>(j)] = discrete_entropy(
        fcodes[static_cast<std::size_t>(j)], spec.cardinalities[static_cast<std::size_t>(j)]);
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < k; ++j)
      out.m(i, j) = discrete_mi(zcodes[static_cast<std::size_t>(i)],
                                fcodes[static_cast<std::size_t>(j)], cfg.bins,
                                spec.cardinalities[static_cast<std::size_t>(j)]);
  return out;
}

DciResult dci(const Mat& r, const std::vector<double>& normalized_errors) {
  const std::int64_t d = r.rows, k = r.cols;
  if (d < 1 || k < 2) throw ConfigError("dci: need d >= 1 and k >= 2");
  double total = 0;
  for (double v : r.a) {
    if (v < 0) throw ConfigError("dci: negative importance");
    total += v;
  }
  if (total <= 0) throw ContractError("dci: all-zero importance matrix");

  DciResult out;
  const double logk = std::log(static_cast<double>(k));
  for (std::int64_t i = 0; i < d; ++i) {
    double rowsum = 0;
    for (std::int64_t j = 0; j < k; ++j) rowsum += r(i, j);
    if (rowsum <= 0) continue;  // zero-mass row: zero weight
    double h = 0;
    for (std::int64_t j = 0; j < k; ++j) {
      const double p = r(i, j) / rowsum;
      if (p > 0) h -= p * std::log(p);
    }
    out.d += rowsum / total * (1.0 - h / logk);
  }
  if (d >= 2) {
    const double logd = std::log(static_cast<double>(d));
    for (std::int64_t j = 0; j < k; ++j) {
      double colsum = 0;
      for (std::int64_t i = 0; i < d; ++i) colsum += r(i, j);
      if (colsum <= 0) continue;
      double h = 0;
      for (std::int64_t i = 0; i < d; ++i) {
        const double p = r(i, j) / colsum;
        if (p > 0) h -= p * std::log(p);
      }
      out.c += colsum / total * (1.0 - h / logd);
    }
  } else {
    out.c = 1.0;  // a single dimension is trivially complete
  }
  out.per_factor_error = normalized_errors;
  if (!normalized_errors.empty()) {
    const double mean_err =
        std::accumulate(normalized_errors.begin(), normalized_errors.end(), 0.0) /
        static_cast<double>(normalized_errors.size());
    out.i = std::clamp(1.0 - mean_err, 0.0, 1.0);
  }
  return out;
}

double mig_from_mi(const MiMatrix& mi, std::vector<std::string>* warnings) {
  const std::int64_t d = mi.m.rows, k = mi.m.cols;
  if (d < 2) throw ConfigError("mig: need at least 2 latent dimensions");
  double acc = 0;
  std::int64_t used = 0;
  for (std::int64_t j = 0; j < k; ++j) {
    const double h = mi.factor_entropy[static_cast<std::size_t>(j)];
    if (h <= 1e-12) {
      if (warnings)
        warnings->push_back("mig: factor " + std::to_string(j) +
                            " has zero entropy; excluded");
      continue;
    }
    double best = -1, second = -1;
    for (std::int64_t i = 0; i < d; ++i) {
      const double v = mi.m(i, j);
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    acc += (best - second) / h;
    ++used;
  }
  if (used == 0) throw ContractError("mig: every factor has zero entropy");
  return acc / static_cast<double>(used);
}

double mig(const Mat& z, const IMat& factors, const FactorSpec& spec,
           const MiConfig& cfg, std::uint64_t seed,
           std::vector<std::string>* warnings) {
  return mig_from_mi(mi_matrix(z, factors, spec, cfg, seed), warnings);
}

double modularity(const Mat& mi, std::vector<std::string>* warnings) {
  const std::int64_t d = mi.rows, k = mi.cols;
  if (k < 2) throw ConfigError("modularity: need at least 2 factors");
  if (d < 1) throw ConfigError("modularity: empty representation");
  double acc = 0;
  for (std::int64_t i = 0; i < d; ++i) {
    double best = -1;
    std::int64_t best_j = 0;
    for (std::int64_t j = 0; j < k; ++j)
      if (mi(i, j) > best) {
        best = mi(i, j);
        best_j = j;
      }
    if (best <= 0) {
      if (warnings)
        warnings->push_back("modularity: dimension " + std::to_string(i) +
                            " has zero mutual information with every factor");
      acc += 1.0;
      continue;
    }
    double offmax = 0;
    for (std::int64_t j = 0; j < k; ++j) {
      if (j == best_j) continue;
      const double ratio = mi(i, j) / best;
      offmax += ratio * ratio;
    }
    acc += 1.0 - offmax / static_cast<double>(k - 1);
  }
  return acc / static_cast<double>(d);
}

double sap(const Mat& z, const Mat& y_normalized) {
  if (z.rows != y_normalized.rows) throw ConfigError("sap: row count mismatch");
  if (z.rows < 2) throw ConfigError("sap: need at least 2 rows");
  const std::int64_t d = z.cols, k = y_normalized.cols;
  const double n = static_cast<double>(z.rows);

  std::vector<double> zmean(static_cast<std::size_t>(d), 0.0);
  std::vector<double> ymean(static_cast<std::size_t>(k), 0.0);
  for (std::int64_t r = 0; r < z.rows; ++r) {
    for (std::int64_t i = 0; i < d; ++i) zmean[static_cast<std::size_t>(i)] += z(r, i);
    for (std::int64_t j = 0; j < k; ++j)
      ymean[static_cast<std::size_t>(j)] += y_normalized(r, j);
  }
  for (auto& v : zmean) v /= n;
  for (auto& v : ymean) v /= n;

  double total = 0;
  for (std::int64_t j = 0; j < k; ++j) {
    double best = 0, second = 0;
    double yvar = 0;
    for (std::int64_t r = 0; r < z.rows; ++r) {
      const double dy = y_normalized(r, j) - ymean[static_cast<std::size_t>(j)];
      yvar += dy * dy;
    }
    for (std::int64_t i = 0; i < d; ++i) {
      double zvar = 0, cov = 0;
      for (std::int64_t r = 0; r < z.rows; ++r) {
        const double dz = z(r, i) - zmean[static_cast<std::size_t>(i)];
        const double dy = y_normalized(r, j) - ymean[static_cast<std::size_t>(j)];
        zvar += dz * dz;
        cov += dz * dy;
      }
      const double r2 =
          (zvar > 0 && yvar > 0) ? (cov * cov) / (zvar * yvar) : 0.0;
      if (r2 > best) {
        second = best;
        best = r2;
      } else if (r2 > second) {
        second = r2;
      }
    }
    total += best - second;
  }
  return total / static_cast<double>(k);
}

namespace {

// Shared vote machinery for the intervention scores. Draws factor tuples
// from the enumerated joint, renders and encodes them in one batch per vote.
struct VoteSampler {
  const FactorWorld& world;
  const EncodeFn& encode;
  std::vector<double> cumulative;
  Rng rng;
  std::uint64_t noise_counter = 0;

  VoteSampler(const FactorWorld& w, const CorrelationSpec& corr,
              const EncodeFn& enc, std::uint64_t seed)
      : world(w), encode(enc), rng(derive_seed(seed, {0x766f7465})) {
    const auto probs = enumerate_joint(w.spec(), corr);
    cumulative.resize(probs.size());
    double acc = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      cumulative[i] = acc;
    }
    cumulative.back() = 1.0;
  }

  std::vector<std::int32_t> draw_tuple() {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto idx = static_cast<std::int64_t>(it - cumulative.begin());
    return world.spec().tuple_from_index(
        std::min<std::int64_t>(idx, static_cast<std::int64_t>(cumulative.size()) - 1));
  }

  Mat encode_tuples(const IMat& tuples) {
    return encode(world.render(tuples, derive_seed(0x6e6f6973, {noise_counter++})));
  }
};

}  // namespace

double betavae_score(const FactorWorld& world, const CorrelationSpec& corr,
                     const EncodeFn& encode, const VoteScoreConfig& cfg,
                     std::uint64_t seed) {
  const int k = world.spec().k();
  if (k < 2) throw ConfigError("betavae_score: need at least 2 factors");
  if (cfg.n_train < 1 || cfg.n_test < 1 || cfg.pairs_per_vote < 1)
    throw ConfigError("betavae_score: bad vote counts");

  VoteSampler sampler(world, corr, encode, seed);
  const std::int64_t total = cfg.n_train + cfg.n_test;
  const std::int64_t L = cfg.pairs_per_vote;

  std::int64_t d = -1;
  Mat features;  // filled after d is known
  std::vector<int> labels(static_cast<std::size_t>(total));
  for (std::int64_t v = 0; v < total; ++v) {
    const int fk = static_cast<int>(sampler.rng.uniform_int(k));
    IMat tuples(2 * L, k);
    for (std::int64_t l = 0; l < L; ++l) {
      auto t1 = sampler.draw_tuple();
      auto t2 = sampler.draw_tuple();
      t2[static_cast<std::size_t>(fk)] = t1[static_cast<std::size_t>(fk)];
      for (int f = 0; f < k; ++f) {
        tuples(2 * l, f) = t1[static_cast<std::size_t>(f)];
        tuples(2 * l + 1, f) = t2[static_cast<std::size_t>(f)];
      }
    }
    const Mat z = sampler.encode_tuples(tuples);
    if (d < 0) {
      d = z.cols;
      features = Mat(total, d, 0.0);
    }
    for (std::int64_t l = 0; l < L; ++l)
      for (std::int64_t c = 0; c < d; ++c)
        features(v, c) += std::fabs(z(2 * l, c) - z(2 * l + 1, c)) /
                          static_cast<double>(L);
    labels[static_cast<std::size_t>(v)] = fk;
  }

  // multinomial logistic regression on the training votes (full-batch
  // gradient descent on standardized features; deterministic)
  std::vector<double> fmean(static_cast<std::size_t>(d), 0.0);
  std::vector<double> fscale(static_cast<std::size_t>(d), 1.0);
  for (std::int64_t v = 0; v < cfg.n_train; ++v)
    for (std::int64_t c = 0; c < d; ++c) fmean[static_cast<std::size_t>(c)] += features(v, c);
  for (auto& m : fmean) m /= static_cast<double>(cfg.n_train);
  for (std::int64_t v = 0; v < cfg.n_train; ++v)
    for (std::int64_t c = 0; c < d; ++c) {
      const double x = features(v, c) - fmean[static_cast<std::size_t>(c)];
      fscale[static_cast<std::size_t>(c)] += x * x;  // +1 baseline avoids /0
    }
  for (auto& s : fscale) s = std::sqrt(s / static_cast<double>(cfg.n_train));

  Mat w(d, k, 0.0);
  std::vector<double> b(static_cast<std::size_t>(k), 0.0);
  const double lr = 0.5;
  std::vector<double> logits(static_cast<std::size_t>(k));
  Mat gw(d, k, 0.0);
  std::vector<double> gb(static_cast<std::size_t>(k), 0.0);
  for (int it = 0; it < 200; ++it) {
    std::fill(gw.a.begin(), gw.a.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::int64_t v = 0; v < cfg.n_train; ++v) {
      double mx = -1e300;
      for (int c = 0; c < k; ++c) {
        double s = b[static_cast<std::size_t>(c)];
        for (std::int64_t f = 0; f < d; ++f)
          s += w(f, c) * (features(v, f) - fmean[static_cast<std::size_t>(f)]) /
               fscale[static_cast<std::size_t>(f)];
        logits[static_cast<std::size_t>(c)] = s;
        mx = std::max(mx, s);
      }
      double zsum = 0;
      for (int c = 0; c < k; ++c) {
        logits[static_cast<std::size_t>(c)] = std::exp(logits[static_cast<std::size_t>(c)] - mx);
        zsum += logits[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < k; ++c) {
        const double p = logits[static_cast<std::size_t>(c)] / zsum;
        const double err = p - (c == labels[static_cast<std::size_t>(v)] ? 1.0 : 0.0);
        gb[static_cast<std::size_t>(c)] += err;
        for (std::int64_t f = 0; f < d; ++f)
          gw(f, c) += err * (features(v, f) - fmean[static_cast<std::size_t>(f)]) /
                      fscale[static_cast<std::size_t>(f)];
      }
    }
    const double inv = 1.0 / static_cast<double>(cfg.n_train);
    for (std::size_t i = 0; i < w.a.size(); ++i) w.a[i] -= lr * gw.a[i] * inv;
    for (int c = 0; c < k; ++c) gb[static_cast<std::size_t>(c)] *= inv;
    for (int c = 0; c < k; ++c) b[static_cast<std::size_t>(c)] -= lr * gb[static_cast<std::size_t>(c)];
  }

  std::int64_t correct = 0;
  for (std::int64_t v = cfg.n_train; v < total; ++v) {
    int arg = 0;
    double best = -1e300;
    for (int c = 0; c < k; ++c) {
      double s = b[static_cast<std::size_t>(c)];
      for (std::int64_t f = 0; f < d; ++f)
        s += w(f, c) * (features(v, f) - fmean[static_cast<std::size_t>(f)]) /
             fscale[static_cast<std::size_t>(f)];
      if (s > best) {
        best = s;
        arg = c;
      }
    }
    if (arg == labels[static_cast<std::size_t>(v)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(cfg.n_test);
}

double factorvae_score(const FactorWorld& world, const CorrelationSpec& corr,
                       const EncodeFn& encode, const VoteScoreConfig& cfg,
                       std::uint64_t seed) {
  const int k = world.spec().k();
  if (k < 2) throw ConfigError("factorvae_score: need at least 2 factors");
  if (cfg.n_train < 1 || cfg.n_test < 1 || cfg.pairs_per_vote < 2)
    throw ConfigError("factorvae_score: bad vote counts");

  VoteSampler sampler(world, corr, encode, derive_seed(seed, {0x6676}));

  // global per-dimension variance for normalization and collapse pruning
  const std::int64_t n_var = 4096;
  IMat var_tuples(n_var, k);
  for (std::int64_t r = 0; r < n_var; ++r) {
    const auto t = sampler.draw_tuple();
    for (int f = 0; f < k; ++f) var_tuples(r, f) = t[static_cast<std::size_t>(f)];
  }
  const Mat var_z = sampler.encode_tuples(var_tuples);
  const std::int64_t d = var_z.cols;
  std::vector<double> global_var(static_cast<std::size_t>(d));
  for (std::int64_t c = 0; c < d; ++c)
    global_var[static_cast<std::size_t>(c)] = variance_of(column_of(var_z, c));
  const double max_var =
      *std::max_element(global_var.begin(), global_var.end());
  std::vector<std::int64_t> active;
  for (std::int64_t c = 0; c < d; ++c)
    if (max_var > 0 && global_var[static_cast<std::size_t>(c)] >
                           cfg.collapse_threshold * max_var)
      active.push_back(c);
  if (active.empty()) active.push_back(0);  // fully collapsed: chance votes

  const std::int64_t L = cfg.pairs_per_vote;
  auto cast_vote = [&]() -> std::pair<std::int64_t, int> {
    const int fk = static_cast<int>(sampler.rng.uniform_int(k));
    const auto fixed = sampler.draw_tuple();
    IMat tuples(L, k);
    for (std::int64_t l = 0; l < L; ++l) {
      auto t = sampler.draw_tuple();
      t[static_cast<std::size_t>(fk)] = fixed[static_cast<std::size_t>(fk)];
      for (int f = 0; f < k; ++f) tuples(l, f) = t[static_cast<std::size_t>(f)];
    }
    const Mat z = sampler.encode_tuples(tuples);
    std::int64_t arg = active.front();
    double best = 1e300;
    for (std::int64_t c : active) {
      const double gv = global_var[static_cast<std::size_t>(c)];
      const double nv = gv > 0 ? variance_of(column_of(z, c)) / gv : 1e300;
      if (nv < best) {
        best = nv;
        arg = c;
      }
    }
    return {arg, fk};
  };

  Mat votes(d, k, 0.0);
  for (std::int64_t v = 0; v < cfg.n_train; ++v) {
    const auto [dim, fk] = cast_vote();
    votes(dim, fk) += 1.0;
  }
  std::vector<int> classifier(static_cast<std::size_t>(d), 0);
  for (std::int64_t c = 0; c < d; ++c) {
    double best = -1;
    for (int f = 0; f < k; ++f)
      if (votes(c, f) > best) {
        best = votes(c, f);
        classifier[static_cast<std::size_t>(c)] = f;
      }
  }
  std::int64_t correct = 0;
  for (std::int64_t v = 0; v < cfg.n_test; ++v) {
    const auto [dim, fk] = cast_vote();
    if (classifier[static_cast<std::size_t>(dim)] == fk) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(cfg.n_test);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["scores"] = scores;
  j["importance"] = mat_to_json(importance);
  j["mi"] = mat_to_json(mi);
  j["per_factor_error"] = per_factor_error;
  j["warnings"] = warnings;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.scores = j.at("scores").get<std::map<std::string, double>>();
  r.importance = mat_from_json(j.at("importance"));
  r.mi = mat_from_json(j.at("mi"));
  r.per_factor_error = j.at("per_factor_error").get<std::vector<double>>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

MetricReport evaluate_representation(const EncodeFn& encode,
                                     const FactorWorld& world,
                                     const CorrelationSpec& corr_eval,
                                     const MetricConfig& cfg,
                                     std::uint64_t seed) {
  MetricReport report;
  const FactorDataset train =
      sample_dataset(world, corr_eval, cfg.n_train, derive_seed(seed, {0x6d657431}));
  const Mat z_train = encode(train.observations);
  if (z_train.rows != train.observations.rows)
    throw ContractError("evaluate: encoder changed the row count");

  if (cfg.dci) {
    const FactorDataset test =
        sample_dataset(world, corr_eval, cfg.n_test, derive_seed(seed, {0x6d657432}));
    const Mat z_test = encode(test.observations);
    const ProbeSet probes =
        fit_probes(z_train, train.normalized, cfg.probe, derive_seed(seed, {0x70726f62}));
    std::vector<double> errors;
    for (std::int64_t f = 0; f < world.spec().k(); ++f) {
      if (probes.per_factor[static_cast<std::size_t>(f)].degenerate)
        report.warnings.push_back("dci: factor " + std::to_string(f) +
                                  " constant in training data");
      const auto pred = probes.per_factor[static_cast<std::size_t>(f)].predict(z_test);
      double mse = 0;
      for (std::int64_t r = 0; r < z_test.rows; ++r) {
        const double e = pred[static_cast<std::size_t>(r)] - test.normalized(r, f);
        mse += e * e;
      }
      mse /= static_cast<double>(z_test.rows);
      const double var = variance_of(column_of(test.normalized, f));
      if (var > 0) {
        errors.push_back(std::sqrt(mse / var));  // normalized RMSE
      } else {
        errors.push_back(1.0);
        report.warnings.push_back("dci: factor " + std::to_string(f) +
                                  " constant in test data; error set to chance");
      }
    }
    const DciResult d = dci(probes.importance, errors);
    report.scores["dci_d"] = d.d;
    report.scores["dci_c"] = d.c;
    report.scores["dci_i"] = d.i;
    report.importance = probes.importance;
    report.per_factor_error = d.per_factor_error;
  }

  if (cfg.mig || cfg.modularity) {
    const MiMatrix mi = mi_matrix(z_train, train.factors, world.spec(), cfg.mi,
                                  derive_seed(seed, {0x6d6967}));
    report.mi = mi.m;
    if (cfg.mig) report.scores["mig"] = mig_from_mi(mi, &report.warnings);
    if (cfg.modularity)
      report.scores["modularity"] = modularity(mi.m, &report.warnings);
  }

  if (cfg.sap) report.scores["sap"] = sap(z_train, train.normalized);

  if (cfg.betavae)
    report.scores["betavae"] = betavae_score(world, corr_eval, encode, cfg.votes,
                                             derive_seed(seed, {0x6256}));
  if (cfg.factorvae)
    report.scores["factorvae"] = factorvae_score(world, corr_eval, encode,
                                                 cfg.votes, derive_seed(seed, {0x6656}));

  if (cfg.hfs) {
    const std::int64_t max_batches =
        std::max<std::int64_t>(1, z_train.rows / cfg.hfs_batch_size);
    report.scores["hfs"] = hfs_metric(z_train, cfg.hfs_batch_size,
                                      std::min(cfg.hfs_batches, max_batches),
                                      derive_seed(seed, {0x686673}));
  }
  return report;
}

MetricReport evaluate_all(const SaeModel& model, const FactorWorld& world,
                          const CorrelationSpec& corr_eval,
                          const MetricConfig& cfg, std::uint64_t seed) {
  EncodeFn encode = [&model](const Mat& obs) { return model.encode_means(obs); };
  return evaluate_representation(encode, world, corr_eval, cfg, seed);
}

}  // namespace hfslab
