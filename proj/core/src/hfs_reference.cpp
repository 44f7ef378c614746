#include "hfslab/hfs_reference.hpp"

#include <cmath>
#include <limits>

namespace hfslab {

namespace {

double point_dist(double x1, double x2, double y1, double y2,
                  HfsDistance dist) {
  const double sq = (x1 - y1) * (x1 - y1) + (x2 - y2) * (x2 - y2);
  return dist == HfsDistance::kEuclidean ? std::sqrt(sq) : sq;
}

double min_dist_to_rows(const Mat& z, int i, int j, double zi, double zj,
                        HfsDistance dist) {
  double mn = std::numeric_limits<double>::infinity();
  for (std::int64_t c = 0; c < z.rows; ++c) {
    const double d = point_dist(zi, zj, z(c, i), z(c, j), dist);
    if (d < mn) mn = d;
  }
  return mn;
}

}  // namespace

double ref_hfs_pairwise(const Mat& z, const PairSet& pairs, HfsDistance dist) {
  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t a = 0; a < z.rows; ++a)
      for (std::int64_t b = 0; b < z.rows; ++b) {
        const double d = min_dist_to_rows(z, i, j, z(a, i), z(b, j), dist);
        if (d > mx) mx = d;
      }
    total += mx;
  }
  return total;
}

double ref_hfs_averaged(const Mat& z, const PairSet& pairs, HfsDistance dist) {
  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    double acc = 0.0;
    for (std::int64_t a = 0; a < z.rows; ++a)
      for (std::int64_t b = 0; b < z.rows; ++b)
        acc += min_dist_to_rows(z, i, j, z(a, i), z(b, j), dist);
    total += acc / static_cast<double>(z.rows * z.rows);
  }
  return total;
}

namespace {

double ref_softmin_expectation(const Mat& z, int i, int j, double zi,
                               double zj, double tau, HfsDistance dist) {
  double mn = std::numeric_limits<double>::infinity();
  for (std::int64_t c = 0; c < z.rows; ++c)
    mn = std::min(mn, point_dist(zi, zj, z(c, i), z(c, j), dist));
  double norm = 0.0, acc = 0.0;
  for (std::int64_t c = 0; c < z.rows; ++c) {
    const double d = point_dist(zi, zj, z(c, i), z(c, j), dist);
    const double e = std::exp(-(d - mn) / tau);
    norm += e;
    acc += e * d;
  }
  return acc / norm;
}

}  // namespace

double ref_hfs_softmin(const Mat& z, const PairSet& pairs, double tau,
                       HfsDistance dist) {
  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t a = 0; a < z.rows; ++a)
      for (std::int64_t b = 0; b < z.rows; ++b)
        mx = std::max(mx, ref_softmin_expectation(z, i, j, z(a, i), z(b, j),
                                                  tau, dist));
    total += mx;
  }
  return total;
}

double ref_hfs_soft(const Mat& z, const PairSet& pairs, double tau1,
                    double tau2, HfsDistance dist) {
  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    std::vector<double> s;
    s.reserve(static_cast<std::size_t>(z.rows * z.rows));
    for (std::int64_t a = 0; a < z.rows; ++a)
      for (std::int64_t b = 0; b < z.rows; ++b)
        s.push_back(
            ref_softmin_expectation(z, i, j, z(a, i), z(b, j), tau1, dist));
    double mx = s[0];
    for (double v : s) mx = std::max(mx, v);
    double norm = 0.0, acc = 0.0;
    for (double v : s) {
      const double e = std::exp((v - mx) / tau2);
      norm += e;
      acc += e * v;
    }
    total += acc / norm;
  }
  return total;
}

double ref_hfs_subsampled(const Mat& z, int count, HfsDistance dist,
                          std::uint64_t seed) {
  const int kz = static_cast<int>(z.cols);
  const auto tuples = draw_subsample_tuples(z.rows, kz, count, seed);
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& rowsel : tuples) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < z.rows; ++c) {
      double sq = 0.0;
      for (int m = 0; m < kz; ++m) {
        const double d = z(rowsel[static_cast<std::size_t>(m)], m) - z(c, m);
        sq += d * d;
      }
      const double dd = dist == HfsDistance::kEuclidean ? std::sqrt(sq) : sq;
      if (dd < mn) mn = dd;
    }
    if (mn > mx) mx = mn;
  }
  return mx;
}

double ref_full_product_hausdorff(const Mat& z, HfsDistance dist) {
  const std::int64_t b = z.rows;
  const int kz = static_cast<int>(z.cols);
  std::int64_t n_tuples = 1;
  for (int m = 0; m < kz; ++m) {
    n_tuples *= b;
    if (n_tuples > 20000000)
      throw ConfigError("full product enumeration too large");
  }
  std::vector<std::int64_t> sel(static_cast<std::size_t>(kz), 0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::int64_t t = 0; t < n_tuples; ++t) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < b; ++c) {
      double sq = 0.0;
      for (int m = 0; m < kz; ++m) {
        const double d = z(sel[static_cast<std::size_t>(m)], m) - z(c, m);
        sq += d * d;
      }
      const double dd = dist == HfsDistance::kEuclidean ? std::sqrt(sq) : sq;
      if (dd < mn) mn = dd;
    }
    if (mn > mx) mx = mn;
    for (int m = kz - 1; m >= 0; --m) {
      if (++sel[static_cast<std::size_t>(m)] < b) break;
      sel[static_cast<std::size_t>(m)] = 0;
    }
  }
  return mx;
}

double ref_hfs_criterion(const Mat& z, const HfsConfig& cfg,
                         const PairSet& pairs, std::uint64_t draw_seed) {
  switch (cfg.variant) {
    case HfsVariant::kPairwise:
    case HfsVariant::kSinglePair:
      return ref_hfs_pairwise(z, pairs, cfg.distance);
    case HfsVariant::kAveraged:
      return ref_hfs_averaged(z, pairs, cfg.distance);
    case HfsVariant::kSubsampled:
      return ref_hfs_subsampled(z, cfg.subsample_count, cfg.distance,
                                draw_seed);
    case HfsVariant::kSoftmin:
      return ref_hfs_softmin(z, pairs, cfg.tau, cfg.distance);
    case HfsVariant::kSoft:
      return ref_hfs_soft(z, pairs, cfg.tau1, cfg.tau2, cfg.distance);
  }
  throw ConfigError("hfs: unknown variant");
}

}  // namespace hfslab
