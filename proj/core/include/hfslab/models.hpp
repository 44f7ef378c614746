#pragma once

#include <string>
#include <vector>

#include "hfslab/common.hpp"
#include "hfslab/rng.hpp"
#include "hfslab/tensor.hpp"

namespace hfslab {

struct MlpConfig {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::vector<std::int64_t> hidden;
};

// Dense MLP with ReLU hidden activations and a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& prefix, MlpConfig cfg, Rng& rng);

  Tensor forward(Tape& tape, const Tensor& x);
  // Tape-free forward with the same accumulation order as the tape path.
  Mat forward_plain(const Mat& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  MlpConfig cfg_;
  std::vector<Parameter> params_;  // W0, b0, W1, b1, ...
};

struct SaeConfig {
  std::int64_t obs_dim = 32;
  std::int64_t latent_dim = 10;
  std::vector<std::int64_t> encoder_hidden = {64, 64};
  std::vector<std::int64_t> decoder_hidden = {64, 64};
  double min_logvar = -6.0;
};

// One encode pass. `samples` are the reparameterized latents
// means + exp(logvars / 2) * eps with the drawn eps recorded.
struct LatentBatch {
  Tensor means;
  Tensor logvars;
  Tensor samples;
  std::vector<double> eps;
};

// Stochastic autoencoder: the encoder outputs per-dimension Gaussian
// parameters (means and log-variances, the latter clamped from below),
// the decoder reconstructs observations from sampled latents.
class SaeModel {
 public:
  SaeModel(SaeConfig cfg, std::uint64_t seed);

  const SaeConfig& config() const { return cfg_; }

  // Raises ContractError if any encoder output is non-finite.
  LatentBatch encode(Tape& tape, const Tensor& x, Rng& eps_rng);
  Tensor decode(Tape& tape, const Tensor& z);

  // Evaluation path: encoder means only, no tape.
  Mat encode_means(const Mat& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> encoder_parameters();

 private:
  SaeConfig cfg_;
  Mlp encoder_;
  Mlp decoder_;
};

// Mean over the batch of the squared reconstruction error
// || decode(z_sample) - x ||^2 (sum over observation coordinates).
Tensor sae_loss(Tape& tape, SaeModel& model, const Tensor& x,
                const LatentBatch& latents);

// Mean over the batch of the closed-form Gaussian KL to the standard
// normal: 1/2 sum_j (mu^2 + sigma^2 - log sigma^2 - 1).
Tensor kl_term(Tape& tape, const LatentBatch& latents);

}  // namespace hfslab
