#include "hfslab/hfs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hfslab/rng.hpp"

namespace hfslab {

std::string to_string(HfsVariant v) {
  switch (v) {
    case HfsVariant::kPairwise: return "pairwise";
    case HfsVariant::kAveraged: return "averaged";
    case HfsVariant::kSubsampled: return "subsampled";
    case HfsVariant::kSoftmin: return "softmin";
    case HfsVariant::kSoft: return "soft";
    case HfsVariant::kSinglePair: return "single_pair";
  }
  return "?";
}

std::string to_string(HfsDistance d) {
  return d == HfsDistance::kSquaredEuclidean ? "squared_euclidean" : "euclidean";
}

std::string to_string(ScaleRegMode m) {
  switch (m) {
    case ScaleRegMode::kNone: return "none";
    case ScaleRegMode::kVariance: return "variance";
    case ScaleRegMode::kRange: return "range";
  }
  return "?";
}

HfsVariant hfs_variant_from_string(const std::string& s) {
  if (s == "pairwise") return HfsVariant::kPairwise;
  if (s == "averaged") return HfsVariant::kAveraged;
  if (s == "subsampled") return HfsVariant::kSubsampled;
  if (s == "softmin") return HfsVariant::kSoftmin;
  if (s == "soft") return HfsVariant::kSoft;
  if (s == "single_pair") return HfsVariant::kSinglePair;
  throw ConfigError("unknown hfs variant '" + s + "'");
}

HfsDistance hfs_distance_from_string(const std::string& s) {
  if (s == "squared_euclidean") return HfsDistance::kSquaredEuclidean;
  if (s == "euclidean") return HfsDistance::kEuclidean;
  throw ConfigError("unknown hfs distance '" + s + "'");
}

ScaleRegMode scale_reg_from_string(const std::string& s) {
  if (s == "none") return ScaleRegMode::kNone;
  if (s == "variance") return ScaleRegMode::kVariance;
  if (s == "range") return ScaleRegMode::kRange;
  throw ConfigError("unknown scale regularizer '" + s + "'");
}

PairSet PairSet::all(int k_z) {
  if (k_z < 2) throw ConfigError("pair set needs k_z >= 2");
  PairSet ps;
  for (int i = 0; i < k_z; ++i)
    for (int j = i + 1; j < k_z; ++j) ps.pairs.emplace_back(i, j);
  return ps;
}

PairSet PairSet::draw(int k_z, int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("pair set needs count >= 1");
  PairSet ps = all(k_z);
  const int total = static_cast<int>(ps.pairs.size());
  if (count >= total) return ps;
  Rng rng(derive_seed(seed, {0x70616972}));
  rng.shuffle(ps.pairs);
  ps.pairs.resize(static_cast<std::size_t>(count));
  std::sort(ps.pairs.begin(), ps.pairs.end());
  return ps;
}

void HfsConfig::validate(int k_z) const {
  if (k_z < 2) throw ConfigError("hfs: k_z must be >= 2");
  if (gamma < 0.0) throw ConfigError("hfs: gamma must be >= 0");
  if (pairs_to_use < 1) throw ConfigError("hfs: pairs_to_use must be >= 1");
  if (variant == HfsVariant::kSubsampled && subsample_count < 1)
    throw ConfigError("hfs: subsample_count must be >= 1");
  if (variant == HfsVariant::kSoftmin && !(tau > 0.0))
    throw ConfigError("hfs: softmin needs tau > 0");
  if (variant == HfsVariant::kSoft && (!(tau1 > 0.0) || !(tau2 > 0.0)))
    throw ConfigError("hfs: soft needs tau1, tau2 > 0");
  if (scale_weight < 0.0) throw ConfigError("hfs: scale_weight must be >= 0");
  if (scale_reg == ScaleRegMode::kRange && !(scale_min < scale_max))
    throw ConfigError("hfs: range regularizer needs scale_min < scale_max");
}

PairSet HfsConfig::make_pairs(int k_z, std::uint64_t seed) const {
  if (variant == HfsVariant::kSinglePair) return PairSet::draw(k_z, 1, seed);
  return PairSet::draw(k_z, pairs_to_use, seed);
}

namespace {

void check_batch(const Mat& z) {
  if (z.rows < 1 || z.cols < 2)
    throw ConfigError("hfs: latent batch must be [b >= 1, k_z >= 2]");
}

// Squared differences of one column against itself: out[a*b + c] =
// (z(a,col) - z(c,col))^2.
void column_sqdiff(const Mat& z, int col, std::vector<double>& out) {
  const std::int64_t b = z.rows;
  for (std::int64_t a = 0; a < b; ++a) {
    const double za = z(a, col);
    double* row = out.data() + a * b;
    for (std::int64_t c = 0; c < b; ++c) {
      const double d = za - z(c, col);
      row[c] = d * d;
    }
  }
}

struct PairGradEntry {
  std::int64_t ta, tb, tc;  // product tuple rows (ta, tb), selected batch row tc
  double weight;            // upstream weight on this tuple's distance
};

// Adds w * d(dist)/dZ for the distance between the product tuple
// (z(ta,i), z(tb,j)) and the row (z(tc,i), z(tc,j)). `sq` is the squared
// distance, used for the euclidean chain rule.
void add_pair_grad(const Mat& z, int i, int j, std::int64_t ta, std::int64_t tb,
                   std::int64_t tc, double w, double sq, HfsDistance dist,
                   Mat* grad) {
  double scale = w;
  if (dist == HfsDistance::kEuclidean) {
    if (sq <= 0.0) return;  // subgradient 0 at coincident points
    scale = w * 0.5 / std::sqrt(sq);
  }
  const double gi = 2.0 * (z(ta, i) - z(tc, i)) * scale;
  const double gj = 2.0 * (z(tb, j) - z(tc, j)) * scale;
  (*grad)(ta, i) += gi;
  (*grad)(tc, i) -= gi;
  (*grad)(tb, j) += gj;
  (*grad)(tc, j) -= gj;
}

double from_sq(double sq, HfsDistance dist) {
  return dist == HfsDistance::kEuclidean ? std::sqrt(sq) : sq;
}

}  // namespace

double hfs_pairwise(const Mat& z, const PairSet& pairs, HfsDistance dist,
                    Mat* grad) {
  check_batch(z);
  if (pairs.pairs.empty()) throw ConfigError("hfs: empty pair set");
  const std::int64_t b = z.rows;
  std::vector<double> di(static_cast<std::size_t>(b * b));
  std::vector<double> dj(static_cast<std::size_t>(b * b));

  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    column_sqdiff(z, i, di);
    column_sqdiff(z, j, dj);
    double best = -1.0;
    std::int64_t bta = 0, btb = 0, btc = 0;
    for (std::int64_t ta = 0; ta < b; ++ta) {
      const double* da = di.data() + ta * b;
      for (std::int64_t tb = 0; tb < b; ++tb) {
        const double* db = dj.data() + tb * b;
        double mn = da[0] + db[0];
        std::int64_t argc = 0;
        for (std::int64_t c = 1; c < b; ++c) {
          const double v = da[c] + db[c];
          if (v < mn) {
            mn = v;
            argc = c;
          }
        }
        if (mn > best) {
          best = mn;
          bta = ta;
          btb = tb;
          btc = argc;
        }
      }
    }
    total += from_sq(best, dist);
    if (grad) add_pair_grad(z, i, j, bta, btb, btc, 1.0, best, dist, grad);
  }
  return total;
}

double hfs_averaged(const Mat& z, const PairSet& pairs, HfsDistance dist,
                    Mat* grad) {
  check_batch(z);
  if (pairs.pairs.empty()) throw ConfigError("hfs: empty pair set");
  const std::int64_t b = z.rows;
  const double inv = 1.0 / static_cast<double>(b * b);
  std::vector<double> di(static_cast<std::size_t>(b * b));
  std::vector<double> dj(static_cast<std::size_t>(b * b));

  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    column_sqdiff(z, i, di);
    column_sqdiff(z, j, dj);
    double acc = 0.0;
    for (std::int64_t ta = 0; ta < b; ++ta) {
      const double* da = di.data() + ta * b;
      for (std::int64_t tb = 0; tb < b; ++tb) {
        const double* db = dj.data() + tb * b;
        double mn = da[0] + db[0];
        std::int64_t argc = 0;
        for (std::int64_t c = 1; c < b; ++c) {
          const double v = da[c] + db[c];
          if (v < mn) {
            mn = v;
            argc = c;
          }
        }
        acc += from_sq(mn, dist);
        if (grad) add_pair_grad(z, i, j, ta, tb, argc, inv, mn, dist, grad);
      }
    }
    total += acc * inv;
  }
  return total;
}

namespace {

// Softmin expectation over the distances d[0..b) (already in the configured
// distance domain): s = sum_c w_c d_c with w_c ~ exp(-d_c / tau),
// stabilized by the minimum. Returns s; fills w when requested.
double softmin_expectation(const double* d, std::int64_t b, double tau,
                           std::vector<double>* w) {
  double mn = d[0];
  for (std::int64_t c = 1; c < b; ++c) mn = std::min(mn, d[c]);
  double norm = 0.0, acc = 0.0;
  for (std::int64_t c = 0; c < b; ++c) {
    const double e = std::exp(-(d[c] - mn) / tau);
    norm += e;
    acc += e * d[c];
    if (w) (*w)[static_cast<std::size_t>(c)] = e;
  }
  if (w)
    for (auto& v : *w) v /= norm;
  return acc / norm;
}

}  // namespace

double hfs_softmin(const Mat& z, const PairSet& pairs, double tau,
                   HfsDistance dist, Mat* grad) {
  check_batch(z);
  if (pairs.pairs.empty()) throw ConfigError("hfs: empty pair set");
  if (!(tau > 0.0)) throw ConfigError("hfs: softmin needs tau > 0");
  const std::int64_t b = z.rows;
  std::vector<double> di(static_cast<std::size_t>(b * b));
  std::vector<double> dj(static_cast<std::size_t>(b * b));
  std::vector<double> d(static_cast<std::size_t>(b));
  std::vector<double> w(static_cast<std::size_t>(b));

  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    column_sqdiff(z, i, di);
    column_sqdiff(z, j, dj);
    double best = -std::numeric_limits<double>::infinity();
    std::int64_t bta = 0, btb = 0;
    for (std::int64_t ta = 0; ta < b; ++ta) {
      const double* da = di.data() + ta * b;
      for (std::int64_t tb = 0; tb < b; ++tb) {
        const double* db = dj.data() + tb * b;
        for (std::int64_t c = 0; c < b; ++c)
          d[static_cast<std::size_t>(c)] = from_sq(da[c] + db[c], dist);
        const double s = softmin_expectation(d.data(), b, tau, nullptr);
        if (s > best) {
          best = s;
          bta = ta;
          btb = tb;
        }
      }
    }
    total += best;
    if (grad) {
      const double* da = di.data() + bta * b;
      const double* db = dj.data() + btb * b;
      for (std::int64_t c = 0; c < b; ++c)
        d[static_cast<std::size_t>(c)] = from_sq(da[c] + db[c], dist);
      const double s = softmin_expectation(d.data(), b, tau, &w);
      for (std::int64_t c = 0; c < b; ++c) {
        const double coef = w[static_cast<std::size_t>(c)] *
                            (1.0 + (s - d[static_cast<std::size_t>(c)]) / tau);
        add_pair_grad(z, i, j, bta, btb, c, coef, da[c] + db[c], dist, grad);
      }
    }
  }
  return total;
}

double hfs_soft(const Mat& z, const PairSet& pairs, double tau1, double tau2,
                HfsDistance dist, Mat* grad) {
  check_batch(z);
  if (pairs.pairs.empty()) throw ConfigError("hfs: empty pair set");
  if (!(tau1 > 0.0) || !(tau2 > 0.0))
    throw ConfigError("hfs: soft needs tau1, tau2 > 0");
  const std::int64_t b = z.rows;
  std::vector<double> di(static_cast<std::size_t>(b * b));
  std::vector<double> dj(static_cast<std::size_t>(b * b));
  std::vector<double> d(static_cast<std::size_t>(b));
  std::vector<double> w(static_cast<std::size_t>(b));
  std::vector<double> s_all(static_cast<std::size_t>(b * b));
  std::vector<double> outer_w(static_cast<std::size_t>(b * b));

  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    column_sqdiff(z, i, di);
    column_sqdiff(z, j, dj);
    // inner soft minima for every product tuple
    for (std::int64_t ta = 0; ta < b; ++ta) {
      const double* da = di.data() + ta * b;
      for (std::int64_t tb = 0; tb < b; ++tb) {
        const double* db = dj.data() + tb * b;
        for (std::int64_t c = 0; c < b; ++c)
          d[static_cast<std::size_t>(c)] = from_sq(da[c] + db[c], dist);
        s_all[static_cast<std::size_t>(ta * b + tb)] =
            softmin_expectation(d.data(), b, tau1, nullptr);
      }
    }
    // softmax-weighted average with weights ~ exp(s / tau2)
    double mx = s_all[0];
    for (double s : s_all) mx = std::max(mx, s);
    double norm = 0.0, val = 0.0;
    for (std::size_t p = 0; p < s_all.size(); ++p) {
      const double e = std::exp((s_all[p] - mx) / tau2);
      outer_w[p] = e;
      norm += e;
      val += e * s_all[p];
    }
    val /= norm;
    total += val;
    if (grad) {
      for (std::int64_t ta = 0; ta < b; ++ta) {
        const double* da = di.data() + ta * b;
        for (std::int64_t tb = 0; tb < b; ++tb) {
          const double* db = dj.data() + tb * b;
          const std::size_t p = static_cast<std::size_t>(ta * b + tb);
          const double wp = outer_w[p] / norm;
          const double up = wp * (1.0 + (s_all[p] - val) / tau2);
          if (up == 0.0) continue;
          for (std::int64_t c = 0; c < b; ++c)
            d[static_cast<std::size_t>(c)] = from_sq(da[c] + db[c], dist);
          const double s = softmin_expectation(d.data(), b, tau1, &w);
          for (std::int64_t c = 0; c < b; ++c) {
            const double coef =
                up * w[static_cast<std::size_t>(c)] *
                (1.0 + (s - d[static_cast<std::size_t>(c)]) / tau1);
            add_pair_grad(z, i, j, ta, tb, c, coef, da[c] + db[c], dist, grad);
          }
        }
      }
    }
  }
  return total;
}

std::vector<std::vector<std::int64_t>> draw_subsample_tuples(
    std::int64_t b, int k_z, int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x747570}));
  std::vector<std::vector<std::int64_t>> tuples(
      static_cast<std::size_t>(count),
      std::vector<std::int64_t>(static_cast<std::size_t>(k_z)));
  for (auto& t : tuples)
    for (auto& r : t) r = rng.uniform_int(b);
  return tuples;
}

double hfs_subsampled(const Mat& z, int count, HfsDistance dist,
                      std::uint64_t seed, Mat* grad) {
  check_batch(z);
  if (count < 1) throw ConfigError("hfs: subsample_count must be >= 1");
  const std::int64_t b = z.rows;
  const int kz = static_cast<int>(z.cols);
  const auto tuples = draw_subsample_tuples(b, kz, count, seed);

  double best = -1.0;
  std::int64_t bt = 0, btc = 0;
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const auto& rowsel = tuples[t];
    double mn = std::numeric_limits<double>::infinity();
    std::int64_t argc = 0;
    for (std::int64_t c = 0; c < b; ++c) {
      double sq = 0.0;
      const double* zr = z.row(c);
      for (int m = 0; m < kz; ++m) {
        const double dd = z(rowsel[static_cast<std::size_t>(m)], m) - zr[m];
        sq += dd * dd;
      }
      if (sq < mn) {
        mn = sq;
        argc = c;
      }
    }
    if (mn > best) {
      best = mn;
      bt = static_cast<std::int64_t>(t);
      btc = argc;
    }
  }
  if (grad) {
    double scale = 1.0;
    bool skip = false;
    if (dist == HfsDistance::kEuclidean) {
      if (best <= 0.0)
        skip = true;
      else
        scale = 0.5 / std::sqrt(best);
    }
    if (!skip) {
      const auto& rowsel = tuples[static_cast<std::size_t>(bt)];
      for (int m = 0; m < kz; ++m) {
        const std::int64_t src = rowsel[static_cast<std::size_t>(m)];
        const double g = 2.0 * (z(src, m) - z(btc, m)) * scale;
        (*grad)(src, m) += g;
        (*grad)(btc, m) -= g;
      }
    }
  }
  return from_sq(best, dist);
}

double scale_regularizer(const Mat& z, ScaleRegMode mode, double a, double b,
                         Mat* grad) {
  check_batch(z);
  if (mode == ScaleRegMode::kNone) return 0.0;
  const std::int64_t n = z.rows;
  double total = 0.0;
  for (std::int64_t col = 0; col < z.cols; ++col) {
    if (mode == ScaleRegMode::kVariance) {
      double mu = 0.0;
      for (std::int64_t r = 0; r < n; ++r) mu += z(r, col);
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::int64_t r = 0; r < n; ++r) {
        const double d = z(r, col) - mu;
        var += d * d;
      }
      var /= static_cast<double>(n);
      const double sd = std::sqrt(var);
      if (sd < 1.0) {
        total += 1.0 - sd;
        // d(1 - sd)/dz_r = -(z_r - mu) / (n * sd); flat at sd == 0
        if (grad && sd > 0.0)
          for (std::int64_t r = 0; r < n; ++r)
            (*grad)(r, col) -= (z(r, col) - mu) / (static_cast<double>(n) * sd);
      }
    } else {
      double mx = z(0, col), mn = z(0, col);
      std::int64_t amx = 0, amn = 0;
      for (std::int64_t r = 1; r < n; ++r) {
        const double v = z(r, col);
        if (v > mx) {
          mx = v;
          amx = r;
        }
        if (v < mn) {
          mn = v;
          amn = r;
        }
      }
      if (mx < b) {
        total += b - mx;
        if (grad) (*grad)(amx, col) -= 1.0;
      }
      if (mn > a) {
        total += mn - a;
        if (grad) (*grad)(amn, col) += 1.0;
      }
    }
  }
  return total;
}

double hfs_criterion(const Mat& z, const HfsConfig& cfg, const PairSet& pairs,
                     std::uint64_t draw_seed) {
  switch (cfg.variant) {
    case HfsVariant::kPairwise:
    case HfsVariant::kSinglePair:
      return hfs_pairwise(z, pairs, cfg.distance);
    case HfsVariant::kAveraged:
      return hfs_averaged(z, pairs, cfg.distance);
    case HfsVariant::kSubsampled:
      return hfs_subsampled(z, cfg.subsample_count, cfg.distance, draw_seed);
    case HfsVariant::kSoftmin:
      return hfs_softmin(z, pairs, cfg.tau, cfg.distance);
    case HfsVariant::kSoft:
      return hfs_soft(z, pairs, cfg.tau1, cfg.tau2, cfg.distance);
  }
  throw ConfigError("hfs: unknown variant");
}

namespace {

Mat mat_view(const Tensor& z) {
  if (z.rank() != 2) throw ConfigError("hfs: latent tensor must be rank 2");
  Mat m(z.shape()[0], z.shape()[1]);
  m.a = z.value();
  return m;
}

}  // namespace

Tensor hfs_term(Tape& tape, const Tensor& z, const HfsConfig& cfg,
                const PairSet& pairs, std::uint64_t draw_seed) {
  const Mat zm = mat_view(z);
  Mat grad(zm.rows, zm.cols, 0.0);
  double value = 0.0;
  switch (cfg.variant) {
    case HfsVariant::kPairwise:
    case HfsVariant::kSinglePair:
      value = hfs_pairwise(zm, pairs, cfg.distance, &grad);
      break;
    case HfsVariant::kAveraged:
      value = hfs_averaged(zm, pairs, cfg.distance, &grad);
      break;
    case HfsVariant::kSubsampled:
      value = hfs_subsampled(zm, cfg.subsample_count, cfg.distance, draw_seed,
                             &grad);
      break;
    case HfsVariant::kSoftmin:
      value = hfs_softmin(zm, pairs, cfg.tau, cfg.distance, &grad);
      break;
    case HfsVariant::kSoft:
      value = hfs_soft(zm, pairs, cfg.tau1, cfg.tau2, cfg.distance, &grad);
      break;
  }
  return tape.scalar_with_grad(z, value, std::move(grad.a));
}

Tensor scale_term(Tape& tape, const Tensor& z, const HfsConfig& cfg) {
  const Mat zm = mat_view(z);
  Mat grad(zm.rows, zm.cols, 0.0);
  const double value =
      scale_regularizer(zm, cfg.scale_reg, cfg.scale_min, cfg.scale_max, &grad);
  return tape.scalar_with_grad(z, value, std::move(grad.a));
}

ObjectiveParts objective(Tape& tape, SaeModel& model, const Tensor& x,
                         const HfsConfig& cfg, double beta, Rng& eps_rng,
                         const PairSet& pairs, std::uint64_t draw_seed) {
  cfg.validate(static_cast<int>(model.config().latent_dim));
  ObjectiveParts parts;
  parts.latents = model.encode(tape, x, eps_rng);
  parts.sae = sae_loss(tape, model, x, parts.latents);
  // sae first, then + beta*kl, then + gamma*hfs: with gamma == 0 this is
  // computation-for-computation the beta-VAE loss, and with beta == 0 too
  // the plain SAE loss.
  parts.total = parts.sae;
  if (beta != 0.0) {
    parts.kl = kl_term(tape, parts.latents);
    parts.total = add(parts.total, mul(parts.kl, beta));
  }
  if (cfg.gamma != 0.0) {
    parts.hfs = hfs_term(tape, parts.latents.means, cfg, pairs, draw_seed);
    parts.total = add(parts.total, mul(parts.hfs, cfg.gamma));
  }
  if (cfg.scale_reg != ScaleRegMode::kNone && cfg.scale_weight != 0.0) {
    parts.scale = scale_term(tape, parts.latents.means, cfg);
    parts.total = add(parts.total, mul(parts.scale, cfg.scale_weight));
  }
  return parts;
}

double hfs_metric(const Mat& latents, std::int64_t batch_size,
                  std::int64_t n_batches, std::uint64_t seed,
                  HfsDistance dist) {
  if (batch_size < 2) throw ConfigError("hfs_metric: batch_size must be >= 2");
  if (n_batches < 1) throw ConfigError("hfs_metric: n_batches must be >= 1");
  if (batch_size * n_batches > latents.rows)
    throw ConfigError("hfs_metric: needs batch_size * n_batches <= rows, got " +
                      std::to_string(batch_size) + " * " +
                      std::to_string(n_batches) + " > " +
                      std::to_string(latents.rows));
  std::vector<std::int64_t> order(static_cast<std::size_t>(latents.rows));
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<std::int64_t>(i);
  Rng rng(derive_seed(seed, {0x6d6574726963}));
  rng.shuffle(order);

  const PairSet pairs = PairSet::all(static_cast<int>(latents.cols));
  double acc = 0.0;
  Mat zb(batch_size, latents.cols);
  for (std::int64_t nb = 0; nb < n_batches; ++nb) {
    for (std::int64_t r = 0; r < batch_size; ++r) {
      const std::int64_t src = order[static_cast<std::size_t>(nb * batch_size + r)];
      for (std::int64_t c = 0; c < latents.cols; ++c) zb(r, c) = latents(src, c);
    }
    acc += hfs_pairwise(zb, pairs, dist);
  }
  return acc / static_cast<double>(n_batches);
}

}  // namespace hfslab
