#include "hfslab/models.hpp"

#include <cmath>
#include <numeric>

namespace hfslab {

Mlp::Mlp(const std::string& prefix, MlpConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  if (cfg_.in <= 0 || cfg_.out <= 0) throw ConfigError("mlp: bad layer sizes");
  std::vector<std::int64_t> dims;
  dims.push_back(cfg_.in);
  for (auto h : cfg_.hidden) {
    if (h <= 0) throw ConfigError("mlp: bad hidden size");
    dims.push_back(h);
  }
  dims.push_back(cfg_.out);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::int64_t in = dims[l], out = dims[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(static_cast<std::size_t>(in * out));
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * s;
    params_.emplace_back(prefix + ".w" + std::to_string(l), Shape{in, out},
                         std::move(w));
    params_.emplace_back(prefix + ".b" + std::to_string(l), Shape{out},
                         std::vector<double>(static_cast<std::size_t>(out), 0.0));
  }
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) {
  Tensor cur = x;
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor w = tape.mount(params_[2 * l]);
    Tensor b = tape.mount(params_[2 * l + 1]);
    cur = add(matmul(cur, w), b);
    if (l + 1 < layers) cur = relu(cur);
  }
  return cur;
}

Mat Mlp::forward_plain(const Mat& x) const {
  Mat cur = x;
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    const Parameter& w = params_[2 * l];
    const Parameter& b = params_[2 * l + 1];
    const std::int64_t in = w.shape[0], out = w.shape[1];
    if (cur.cols != in) throw ConfigError("mlp: input width mismatch");
    Mat next(cur.rows, out, 0.0);
    for (std::int64_t r = 0; r < cur.rows; ++r) {
      const double* xin = cur.row(r);
      double* xout = next.row(r);
      for (std::int64_t p = 0; p < in; ++p) {
        const double xv = xin[p];
        const double* wrow = w.value.data() + p * out;
        for (std::int64_t j = 0; j < out; ++j) xout[j] += xv * wrow[j];
      }
      for (std::int64_t j = 0; j < out; ++j) xout[j] += b.value[static_cast<std::size_t>(j)];
      if (l + 1 < layers)
        for (std::int64_t j = 0; j < out; ++j) xout[j] = xout[j] > 0.0 ? xout[j] : 0.0;
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

SaeModel::SaeModel(SaeConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.latent_dim < 2) throw ConfigError("sae: latent_dim must be >= 2");
  Rng rng(derive_seed(seed, {0x6d6f64656c}));
  encoder_ = Mlp("encoder",
                 MlpConfig{cfg_.obs_dim, 2 * cfg_.latent_dim, cfg_.encoder_hidden},
                 rng);
  decoder_ = Mlp("decoder",
                 MlpConfig{cfg_.latent_dim, cfg_.obs_dim, cfg_.decoder_hidden},
                 rng);
}

LatentBatch SaeModel::encode(Tape& tape, const Tensor& x, Rng& eps_rng) {
  if (x.rank() != 2 || x.shape()[1] != cfg_.obs_dim)
    throw ConfigError("encode: expected [batch, " + std::to_string(cfg_.obs_dim) +
                      "], got " + shape_str(x.shape()));
  Tensor out = encoder_.forward(tape, x);
  for (double v : out.value())
    if (!std::isfinite(v))
      throw ContractError("encode: non-finite encoder activation (batch " +
                          std::to_string(x.shape()[0]) + ", first bad value " +
                          std::to_string(v) + ")");

  const std::int64_t kz = cfg_.latent_dim;
  std::vector<std::int64_t> mean_idx(static_cast<std::size_t>(kz));
  std::vector<std::int64_t> lv_idx(static_cast<std::size_t>(kz));
  std::iota(mean_idx.begin(), mean_idx.end(), 0);
  std::iota(lv_idx.begin(), lv_idx.end(), kz);

  LatentBatch lb;
  lb.means = index_select(out, 1, mean_idx);
  // clamp-from-below: max(raw, floor) == relu(raw - floor) + floor
  Tensor raw_lv = index_select(out, 1, lv_idx);
  lb.logvars = add(relu(add(raw_lv, -cfg_.min_logvar)), cfg_.min_logvar);

  const std::int64_t b = x.shape()[0];
  lb.eps.resize(static_cast<std::size_t>(b * kz));
  for (auto& e : lb.eps) e = eps_rng.normal();
  Tensor eps = tape.constant({b, kz}, lb.eps);
  lb.samples = add(lb.means, mul(exp(mul(lb.logvars, 0.5)), eps));
  return lb;
}

Tensor SaeModel::decode(Tape& tape, const Tensor& z) {
  if (z.rank() != 2 || z.shape()[1] != cfg_.latent_dim)
    throw ConfigError("decode: expected [batch, " + std::to_string(cfg_.latent_dim) +
                      "], got " + shape_str(z.shape()));
  return decoder_.forward(tape, z);
}

Mat SaeModel::encode_means(const Mat& x) const {
  Mat out = encoder_.forward_plain(x);
  Mat means(out.rows, cfg_.latent_dim);
  for (std::int64_t r = 0; r < out.rows; ++r)
    for (std::int64_t c = 0; c < cfg_.latent_dim; ++c) means(r, c) = out(r, c);
  return means;
}

std::vector<Parameter*> SaeModel::parameters() {
  auto out = encoder_.parameters();
  for (auto* p : decoder_.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> SaeModel::parameters() const {
  auto out = encoder_.parameters();
  for (auto* p : static_cast<const Mlp&>(decoder_).parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> SaeModel::encoder_parameters() {
  return encoder_.parameters();
}

Tensor sae_loss(Tape& tape, SaeModel& model, const Tensor& x,
                const LatentBatch& latents) {
  Tensor recon = model.decode(tape, latents.samples);
  return mean(sum(square(sub(recon, x)), 1));
}

Tensor kl_term(Tape&, const LatentBatch& latents) {
  Tensor per = add(sub(add(square(latents.means), exp(latents.logvars)),
                       latents.logvars),
                   -1.0);
  return mean(mul(sum(per, 1), 0.5));
}

}  // namespace hfslab
