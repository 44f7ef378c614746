#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hfslab/factor_world.hpp"
#include "hfslab/models.hpp"
#include "hfslab/probes.hpp"

namespace hfslab {

// Disentanglement metric suite. Everything operates on a representation
// function (rows of observations -> rows of latents); the model-facing entry
// point wraps the encoder means. All estimators are deterministic given
// (data, seed).

struct MiConfig {
  int bins = 20;                  // equal-frequency bins per latent dimension
  std::int64_t n_samples = 10000; // rows subsampled for the MI estimate
};

// Discrete mutual information (nats) between two integer-coded columns.
double discrete_mi(const std::vector<int>& a, const std::vector<int>& b,
                   int na, int nb);
double discrete_entropy(const std::vector<int>& a, int na);

// Equal-frequency binning of a real column into `bins` codes. Equal values
// always receive the same code.
std::vector<int> equal_frequency_bins(const std::vector<double>& v, int bins);

// MI matrix between latent dimensions (rows) and factors (columns), plus
// factor entropies in nats. Subsamples min(n_samples, N) rows without
// replacement.
struct MiMatrix {
  Mat m;                                // d x k
  std::vector<double> factor_entropy;   // k, nats
};
MiMatrix mi_matrix(const Mat& z, const IMat& factors, const FactorSpec& spec,
                   const MiConfig& cfg, std::uint64_t seed);

// DCI scores from an importance matrix and per-factor normalized test
// errors. D weights per-dimension (1 - row entropy, base k); C mirrors it
// over columns (base d); I = 1 - mean normalized error, clamped to [0, 1],
// where the per-factor error is the test RMSE divided by the test standard
// deviation of the factor (1 = chance-level prediction).
struct DciResult {
  double d = 0, c = 0, i = 0;
  std::vector<double> per_factor_error;  // normalized, before clamping
};
DciResult dci(const Mat& r, const std::vector<double>& normalized_errors);

// MIG over a precomputed MI matrix. Factors with zero entropy are excluded
// from the average and noted in `warnings`; raises if every factor is
// excluded.
double mig_from_mi(const MiMatrix& mi, std::vector<std::string>* warnings);

double mig(const Mat& z, const IMat& factors, const FactorSpec& spec,
           const MiConfig& cfg, std::uint64_t seed,
           std::vector<std::string>* warnings = nullptr);

// Mean over dimensions of 1 - sum_{j != argmax} (m_ij / m_max)^2 / (k - 1).
// Dimensions with all-zero MI score 1 by convention (noted in `warnings`).
double modularity(const Mat& mi, std::vector<std::string>* warnings = nullptr);

// Mean over factors of the gap between the best and second-best
// single-dimension linear R^2 (squared correlation).
double sap(const Mat& z, const Mat& y_normalized);

// Intervention-based scores. One vote fixes a random factor, samples
// `pairs_per_vote` observation pairs sharing that factor's value, and
// summarizes the encoded latents; a classifier trained on `n_train` votes is
// scored on `n_test` fresh votes.
struct VoteScoreConfig {
  std::int64_t n_train = 10000;
  std::int64_t n_test = 5000;
  int pairs_per_vote = 64;
  // FactorVAE: dimensions whose global latent variance falls below this
  // fraction of the largest are treated as collapsed and excluded.
  double collapse_threshold = 0.05;
};

using EncodeFn = std::function<Mat(const Mat&)>;

double betavae_score(const FactorWorld& world, const CorrelationSpec& corr,
                     const EncodeFn& encode, const VoteScoreConfig& cfg,
                     std::uint64_t seed);
double factorvae_score(const FactorWorld& world, const CorrelationSpec& corr,
                       const EncodeFn& encode, const VoteScoreConfig& cfg,
                       std::uint64_t seed);

struct MetricConfig {
  bool dci = true;
  bool mig = true;
  bool modularity = true;
  bool sap = true;
  bool betavae = false;   // expensive; off by default in sweeps
  bool factorvae = false;
  bool hfs = true;

  std::int64_t n_train = 10000;  // probe/MI sample counts
  std::int64_t n_test = 5000;
  ProbeConfig probe;
  MiConfig mi;
  VoteScoreConfig votes;
  std::int64_t hfs_batch_size = 64;
  std::int64_t hfs_batches = 8;
};

struct MetricReport {
  std::map<std::string, double> scores;
  Mat importance;                        // d x k (when dci ran)
  Mat mi;                                // d x k (when mig/modularity ran)
  std::vector<double> per_factor_error;  // normalized test errors
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

// Samples evaluation data under `corr_eval`, encodes it, and computes every
// enabled metric.
MetricReport evaluate_representation(const EncodeFn& encode,
                                     const FactorWorld& world,
                                     const CorrelationSpec& corr_eval,
                                     const MetricConfig& cfg,
                                     std::uint64_t seed);

MetricReport evaluate_all(const SaeModel& model, const FactorWorld& world,
                          const CorrelationSpec& corr_eval,
                          const MetricConfig& cfg, std::uint64_t seed);

}  // namespace hfslab
