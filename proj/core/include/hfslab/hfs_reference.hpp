#pragma once

#include "hfslab/hfs.hpp"

namespace hfslab {

// Brute-force reference implementations of every estimator, written as
// direct loop transcriptions of the formulas with no shared buffers or
// caching. They exist to cross-check the optimized implementations (tests,
// and the `oracle hfs` CLI subcommand) and are deliberately slow.

double ref_hfs_pairwise(const Mat& z, const PairSet& pairs, HfsDistance dist);
double ref_hfs_averaged(const Mat& z, const PairSet& pairs, HfsDistance dist);
double ref_hfs_softmin(const Mat& z, const PairSet& pairs, double tau,
                       HfsDistance dist);
double ref_hfs_soft(const Mat& z, const PairSet& pairs, double tau1,
                    double tau2, HfsDistance dist);
// Scores the same drawn tuples as hfs_subsampled for the given seed.
double ref_hfs_subsampled(const Mat& z, int count, HfsDistance dist,
                          std::uint64_t seed);

// Exact one-sided Hausdorff distance from the full k_z-dimensional product
// of column supports (b^k_z tuples) to the joint support. Only feasible for
// tiny batches; used to bound the subsampled estimator in tests.
double ref_full_product_hausdorff(const Mat& z, HfsDistance dist);

double ref_hfs_criterion(const Mat& z, const HfsConfig& cfg,
                         const PairSet& pairs, std::uint64_t draw_seed = 0);

}  // namespace hfslab
