#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hfslab/common.hpp"
#include "hfslab/models.hpp"
#include "hfslab/tensor.hpp"

namespace hfslab {

// Estimators of the Hausdorff factorized-support criterion on a latent
// batch Z of shape [b, k_z].
//
// For a column pair (i, j), write S = Z[:, i] x Z[:, j] for the product of
// the two observed column supports (b^2 two-dimensional tuples) and
// R = Z[:, (i, j)] for the b observed rows restricted to those columns.
// The hard pairwise criterion is
//
//     sum over pairs (i, j) of  max_{z in S}  min_{z' in R}  d(z, z'),
//
// the one-sided Hausdorff distance from the product of the marginal
// supports to the joint support. It is zero exactly when every product
// tuple coincides with an observed row, i.e. when the support factorizes
// over (i, j). Driving it down pushes the support of the representation
// toward a product of per-dimension supports without constraining the
// densities on that support.
//
// Variants:
//   pairwise     hard max-min over all requested column pairs
//   single_pair  pairwise restricted to one drawn pair
//   averaged     outer max replaced by the mean over all b^2 tuples
//   subsampled   tuples drawn over the full k_z dimensions (one value per
//                column), hard max over the drawn tuples only
//   softmin      inner min replaced by the expectation under the softmin
//                distribution p(z'|z) ~ exp(-d(z, z') / tau); outer max hard
//   soft         softmin inside (tau1) and a softmax-weighted average with
//                weights ~ exp(d / tau2) outside (tau2); fully differentiable
//
// Limits (verified by tests): softmin -> pairwise as tau -> 0 and -> the
// mean row distance as tau -> inf; soft -> pairwise as tau1, tau2 -> 0 and
// -> the mean of the soft inner distances as tau2 -> inf.
//
// All estimators are deterministic, use a fixed reduction order, and break
// min/max ties toward the lowest index. Gradients are hand-derived and
// routed through the selected elements (hard variants) or the soft weights
// (softmin/soft); they are validated against central finite differences.

enum class HfsVariant {
  kPairwise,
  kAveraged,
  kSubsampled,
  kSoftmin,
  kSoft,
  kSinglePair,
};

enum class HfsDistance { kSquaredEuclidean, kEuclidean };

enum class ScaleRegMode { kNone, kVariance, kRange };

std::string to_string(HfsVariant v);
std::string to_string(HfsDistance d);
std::string to_string(ScaleRegMode m);
HfsVariant hfs_variant_from_string(const std::string& s);
HfsDistance hfs_distance_from_string(const std::string& s);
ScaleRegMode scale_reg_from_string(const std::string& s);

// Unordered column pairs (i < j) participating in the criterion.
struct PairSet {
  std::vector<std::pair<int, int>> pairs;

  // All k_z * (k_z - 1) / 2 pairs in lexicographic order.
  static PairSet all(int k_z);
  // `count` distinct pairs drawn without replacement; counts larger than
  // the total pair population are clamped to it.
  static PairSet draw(int k_z, int count, std::uint64_t seed);
};

struct HfsConfig {
  HfsVariant variant = HfsVariant::kPairwise;
  double gamma = 0.0;
  int pairs_to_use = 25;
  int subsample_count = 256;
  double tau = 0.1;   // softmin variant
  double tau1 = 0.1;  // soft variant, inner softmin
  double tau2 = 0.1;  // soft variant, outer softmax
  HfsDistance distance = HfsDistance::kSquaredEuclidean;
  std::uint64_t pair_seed = 0;
  // When set, the training loop draws a fresh PairSet every batch instead
  // of once per run.
  bool resample_pairs = false;
  ScaleRegMode scale_reg = ScaleRegMode::kNone;
  double scale_weight = 0.0;
  double scale_min = -1.0;  // range regularizer bound a
  double scale_max = 1.0;   // range regularizer bound b

  void validate(int k_z) const;
  PairSet make_pairs(int k_z, std::uint64_t seed) const;
};

// Value of each estimator; when `grad` is non-null it must be a zeroed (or
// pre-accumulated) [b, k_z] matrix and d(value)/dZ is added into it.
double hfs_pairwise(const Mat& z, const PairSet& pairs, HfsDistance dist,
                    Mat* grad = nullptr);
double hfs_averaged(const Mat& z, const PairSet& pairs, HfsDistance dist,
                    Mat* grad = nullptr);
double hfs_subsampled(const Mat& z, int count, HfsDistance dist,
                      std::uint64_t seed, Mat* grad = nullptr);
double hfs_softmin(const Mat& z, const PairSet& pairs, double tau,
                   HfsDistance dist, Mat* grad = nullptr);
double hfs_soft(const Mat& z, const PairSet& pairs, double tau1, double tau2,
                HfsDistance dist, Mat* grad = nullptr);

// The row-index tuples used by the subsampled variant (count x k_z); shared
// with the reference implementation so both score identical draws.
std::vector<std::vector<std::int64_t>> draw_subsample_tuples(
    std::int64_t b, int k_z, int count, std::uint64_t seed);

// Latent scale regularizers countering support collapse.
//   variance: sum_i max(0, 1 - std(Z[:, i]))
//   range:    sum_i max(0, b - max(Z[:, i])) + max(0, min(Z[:, i]) - a)
double scale_regularizer(const Mat& z, ScaleRegMode mode, double a, double b,
                         Mat* grad = nullptr);

// Value-only dispatch on the configured variant.
double hfs_criterion(const Mat& z, const HfsConfig& cfg, const PairSet& pairs,
                     std::uint64_t draw_seed = 0);

// Records the configured estimator on the tape as a scalar with its
// hand-computed gradient with respect to `z`.
Tensor hfs_term(Tape& tape, const Tensor& z, const HfsConfig& cfg,
                const PairSet& pairs, std::uint64_t draw_seed = 0);
Tensor scale_term(Tape& tape, const Tensor& z, const HfsConfig& cfg);

// Composite training objective on a batch x:
//   gamma * hfs(encoder means) + sae_loss + beta * kl_term
//   (+ scale_weight * scale regularizer on the means, if enabled)
// With gamma == 0 the computation is exactly the beta-VAE loss; with
// gamma == beta == 0 it is exactly the plain SAE loss.
struct ObjectiveParts {
  Tensor total;
  Tensor sae;
  Tensor kl;     // undefined when beta == 0
  Tensor hfs;    // undefined when gamma == 0
  Tensor scale;  // undefined when the scale regularizer is off
  LatentBatch latents;

  double sae_value() const { return sae.item(); }
  double kl_value() const { return kl.defined() ? kl.item() : 0.0; }
  double hfs_value() const { return hfs.defined() ? hfs.item() : 0.0; }
  double scale_value() const { return scale.defined() ? scale.item() : 0.0; }
};

ObjectiveParts objective(Tape& tape, SaeModel& model, const Tensor& x,
                         const HfsConfig& cfg, double beta, Rng& eps_rng,
                         const PairSet& pairs, std::uint64_t draw_seed = 0);

// Evaluation metric: mean hfs_pairwise over `n_batches` disjoint batches of
// a shuffled representation table, using all column pairs.
double hfs_metric(const Mat& latents, std::int64_t batch_size,
                  std::int64_t n_batches, std::uint64_t seed,
                  HfsDistance dist = HfsDistance::kSquaredEuclidean);

}  // namespace hfslab
