#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfslab/common.hpp"

namespace hfslab {

// Regression probes used by the DCI metrics: one regressor per ground-truth
// factor, predicting its normalized value from the representation, plus
// per-dimension importances. Both probes are exact and deterministic, so two
// fits on the same data always produce identical importance matrices.

struct GbtConfig {
  int n_trees = 100;
  int max_depth = 3;
  double shrinkage = 0.1;
  int min_leaf = 2;
};

struct LassoConfig {
  double lambda = 0.01;  // L1 strength on the standardized design
  int max_iter = 1000;
  double tol = 1e-8;
};

enum class ProbeKind { kTreeEnsemble, kL1Linear };

struct ProbeConfig {
  ProbeKind kind = ProbeKind::kTreeEnsemble;
  GbtConfig gbt;
  LassoConfig lasso;
};

// Gradient-boosted regression trees with exact greedy splits. Split
// candidates scan each feature in sorted (value, row) order, so ties and
// therefore the whole fit are deterministic. Importances accumulate the
// squared-error reduction of every split, keyed by feature.
class GbtRegressor {
 public:
  void fit(const Mat& x, const std::vector<double>& y, const GbtConfig& cfg);
  double predict_row(const double* row) const;
  std::vector<double> predict(const Mat& x) const;
  const std::vector<double>& importances() const { return importances_; }

 private:
  struct Node {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  int build_node(const Mat& x, const std::vector<double>& residual,
                 std::vector<std::int64_t>& rows, int depth, Tree& tree);

  GbtConfig cfg_;
  double base_ = 0.0;
  std::vector<Tree> trees_;
  std::vector<double> importances_;
};

// Lasso on standardized features, fit by cyclic coordinate descent.
// Importances are absolute coefficients (on the standardized scale).
class LinearProbe {
 public:
  void fit(const Mat& x, const std::vector<double>& y, const LassoConfig& cfg);
  double predict_row(const double* row) const;
  std::vector<double> predict(const Mat& x) const;
  const std::vector<double>& importances() const { return importances_; }

 private:
  std::vector<double> coef_;  // standardized scale
  std::vector<double> mean_, scale_;
  double intercept_ = 0.0;
  std::vector<double> importances_;
};

// One fitted probe per factor. A constant factor column yields a degenerate
// probe: all-zero importances, constant prediction.
struct FactorProbe {
  ProbeKind kind = ProbeKind::kTreeEnsemble;
  bool degenerate = false;
  GbtRegressor gbt;
  LinearProbe linear;

  std::vector<double> predict(const Mat& x) const;
  const std::vector<double>& importances() const;
};

struct ProbeSet {
  std::vector<FactorProbe> per_factor;
  Mat importance;  // d x k: importance of dimension i for factor j
};

// Fits one probe per column of y (N x k normalized factor values) on the
// representation z (N x d). `seed` is reserved for subsampling options; the
// default exact fits do not consume randomness.
ProbeSet fit_probes(const Mat& z, const Mat& y, const ProbeConfig& cfg,
                    std::uint64_t seed);

}  // namespace hfslab
