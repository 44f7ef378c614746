#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hfslab/common.hpp"

namespace hfslab {

// Discrete ground-truth factors. Factor i takes values 0..cardinalities[i]-1;
// its normalized value is v / (cardinality - 1), so every factor lives on a
// grid inside [0, 1].
struct FactorSpec {
  std::vector<std::int32_t> cardinalities;
  std::vector<std::string> names;

  int k() const { return static_cast<int>(cardinalities.size()); }
  std::int64_t grid_size() const;
  void validate() const;
  double normalized(int factor, std::int32_t value) const {
    return static_cast<double>(value) /
           static_cast<double>(cardinalities[static_cast<std::size_t>(factor)] - 1);
  }
  std::vector<std::int32_t> tuple_from_index(std::int64_t idx) const;
};

FactorSpec default_factor_spec();

// One correlated pair. The joint weight of a grid tuple gains a factor
//   exp(-(zi - f(zj))^2 / (2 sigma^2))
// on normalized values, with f(z) = z, or f(z) = 1 - z when inverted.
struct CorrPair {
  int i = 0;
  int j = 1;
  double sigma = 0.1;
  bool inverted = false;
};

struct Confounder {
  int factor = 0;
  double sigma = 0.2;
};

// Correlation structure over the factors. Either an explicit list of pairs
// or a shared confounder (which expands to the pairs (c, j) for all j != c);
// never both in the same spec.
struct CorrelationSpec {
  std::string label = "none";
  std::vector<CorrPair> pairs;
  std::optional<Confounder> confounder;

  bool is_none() const { return pairs.empty() && !confounder.has_value(); }
  void validate(const FactorSpec& spec) const;
  std::vector<CorrPair> expanded_pairs(const FactorSpec& spec) const;
};

// Unnormalized joint weight of one grid tuple. Multiple pairs multiply.
double joint_weight(const FactorSpec& spec, const CorrelationSpec& corr,
                    const std::int32_t* tuple);

// Normalized joint over the full grid, enumerated row-major with the last
// factor fastest. Refuses grids larger than `limit` cells.
std::vector<double> enumerate_joint(const FactorSpec& spec,
                                    const CorrelationSpec& corr,
                                    std::int64_t limit = 10000000);

// Exact categorical sampling from the enumerated joint via cumulative
// weights. Deterministic given the seed.
IMat sample_factors(const FactorSpec& spec, const CorrelationSpec& corr,
                    std::int64_t n, std::uint64_t seed,
                    std::int64_t limit = 10000000);

struct WorldConfig {
  FactorSpec spec = default_factor_spec();
  int observation_dim = 32;
  int mixing_depth = 2;
  double noise_scale = 0.01;
  std::uint64_t mixing_seed = 2024;
  // Requires mixing_depth == 0: observations are the normalized factors
  // padded with zeros. Used by tests and gold-standard metric checks.
  bool identity_mixing = false;
};

// A synthetic world: discrete factors pushed through a fixed random mixing
// network (never trained) plus Gaussian observation noise.
class FactorWorld {
 public:
  explicit FactorWorld(const WorldConfig& config);

  const WorldConfig& config() const { return cfg_; }
  const FactorSpec& spec() const { return cfg_.spec; }
  int observation_dim() const { return cfg_.observation_dim; }

  Mat normalize(const IMat& factors) const;

  // Renders observations for a factor table. Noise is drawn from its own
  // stream, so the result is deterministic given (mixing_seed, factors,
  // noise_seed).
  Mat render(const IMat& factors, std::uint64_t noise_seed) const;

 private:
  Mat mix(const Mat& normalized) const;

  WorldConfig cfg_;
  std::vector<Mat> weights_;   // per layer, out x in
  std::vector<std::vector<double>> biases_;
};

struct FactorDataset {
  IMat factors;
  Mat observations;
  Mat normalized;

  std::int64_t size() const { return factors.rows; }
};

FactorDataset sample_dataset(const FactorWorld& world,
                             const CorrelationSpec& corr, std::int64_t n,
                             std::uint64_t seed);

// Train/test datasets from one world under two different correlation
// structures (all seeds derived from `seed`).
std::pair<FactorDataset, FactorDataset> make_splits(
    const FactorWorld& world, const CorrelationSpec& corr_train,
    const CorrelationSpec& corr_test, std::int64_t n_train,
    std::int64_t n_test, std::uint64_t seed);

void to_json(nlohmann::json& j, const FactorSpec& s);
void from_json(const nlohmann::json& j, FactorSpec& s);
void to_json(nlohmann::json& j, const CorrPair& p);
void from_json(const nlohmann::json& j, CorrPair& p);
void to_json(nlohmann::json& j, const Confounder& c);
void from_json(const nlohmann::json& j, Confounder& c);
void to_json(nlohmann::json& j, const CorrelationSpec& c);
void from_json(const nlohmann::json& j, CorrelationSpec& c);
void to_json(nlohmann::json& j, const WorldConfig& w);
void from_json(const nlohmann::json& j, WorldConfig& w);

}  // namespace hfslab
