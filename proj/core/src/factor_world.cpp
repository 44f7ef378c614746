#include "hfslab/factor_world.hpp"

#include <algorithm>
#include <cmath>

#include "hfslab/rng.hpp"

namespace hfslab {

std::int64_t FactorSpec::grid_size() const {
  std::int64_t g = 1;
  for (auto c : cardinalities) g *= c;
  return g;
}

void FactorSpec::validate() const {
  if (cardinalities.size() < 2)
    throw ConfigError("factor spec needs at least 2 factors");
  for (auto c : cardinalities)
    if (c < 2) throw ConfigError("factor cardinalities must be >= 2");
  if (!names.empty() && names.size() != cardinalities.size())
    throw ConfigError("factor names must match cardinalities");
}

std::vector<std::int32_t> FactorSpec::tuple_from_index(std::int64_t idx) const {
  const int n = k();
  std::vector<std::int32_t> t(static_cast<std::size_t>(n));
  for (int f = n - 1; f >= 0; --f) {
    const std::int64_t card = cardinalities[static_cast<std::size_t>(f)];
    t[static_cast<std::size_t>(f)] = static_cast<std::int32_t>(idx % card);
    idx /= card;
  }
  return t;
}

FactorSpec default_factor_spec() {
  FactorSpec s;
  s.cardinalities = {8, 8, 8, 8, 4};
  s.names = {"f0", "f1", "f2", "f3", "f4"};
  return s;
}

void CorrelationSpec::validate(const FactorSpec& spec) const {
  if (!pairs.empty() && confounder.has_value())
    throw ConfigError("correlation spec: pairs and confounder are mutually exclusive");
  const int k = spec.k();
  for (const auto& p : pairs) {
    if (p.i < 0 || p.i >= k || p.j < 0 || p.j >= k)
      throw ConfigError("correlation pair index out of range");
    if (p.i == p.j) throw ConfigError("correlation pair needs two distinct factors");
    if (!(p.sigma > 0.0)) throw ConfigError("correlation sigma must be positive");
  }
  if (confounder.has_value()) {
    if (confounder->factor < 0 || confounder->factor >= k)
      throw ConfigError("confounder factor index out of range");
    if (!(confounder->sigma > 0.0))
      throw ConfigError("confounder sigma must be positive");
  }
}

std::vector<CorrPair> CorrelationSpec::expanded_pairs(const FactorSpec& spec) const {
  if (!confounder.has_value()) return pairs;
  std::vector<CorrPair> out;
  const int c = confounder->factor;
  for (int j = 0; j < spec.k(); ++j) {
    if (j == c) continue;
    out.push_back(CorrPair{c, j, confounder->sigma, false});
  }
  return out;
}

double joint_weight(const FactorSpec& spec, const CorrelationSpec& corr,
                    const std::int32_t* tuple) {
  double w = 1.0;
  for (const auto& p : corr.expanded_pairs(spec)) {
    const double zi = spec.normalized(p.i, tuple[p.i]);
    const double zjn = spec.normalized(p.j, tuple[p.j]);
    const double zj = p.inverted ? 1.0 - zjn : zjn;
    const double e = zi - zj;
    w *= std::exp(-(e * e) / (2.0 * p.sigma * p.sigma));
  }
  return w;
}

std::vector<double> enumerate_joint(const FactorSpec& spec,
                                    const CorrelationSpec& corr,
                                    std::int64_t limit) {
  spec.validate();
  corr.validate(spec);
  const std::int64_t g = spec.grid_size();
  if (g > limit)
    throw ConfigError("grid of " + std::to_string(g) +
                      " cells exceeds the enumeration limit of " +
                      std::to_string(limit));
  std::vector<double> w(static_cast<std::size_t>(g));
  const int k = spec.k();
  std::vector<std::int32_t> tuple(static_cast<std::size_t>(k), 0);
  double total = 0.0;
  for (std::int64_t idx = 0; idx < g; ++idx) {
    w[static_cast<std::size_t>(idx)] = joint_weight(spec, corr, tuple.data());
    total += w[static_cast<std::size_t>(idx)];
    // odometer, last factor fastest
    for (int f = k - 1; f >= 0; --f) {
      if (++tuple[static_cast<std::size_t>(f)] <
          spec.cardinalities[static_cast<std::size_t>(f)])
        break;
      tuple[static_cast<std::size_t>(f)] = 0;
    }
  }
  if (!(total > 0.0))
    throw ContractError("joint weight underflowed to zero everywhere");
  for (auto& v : w) v /= total;
  return w;
}

IMat sample_factors(const FactorSpec& spec, const CorrelationSpec& corr,
                    std::int64_t n, std::uint64_t seed, std::int64_t limit) {
  const std::vector<double> joint = enumerate_joint(spec, corr, limit);
  std::vector<double> cum(joint.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    acc += joint[i];
    cum[i] = acc;
  }
  const double total = acc;

  Rng rng(derive_seed(seed, {0x66616374}));
  IMat out(n, spec.k());
  for (std::int64_t r = 0; r < n; ++r) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    std::int64_t idx = it == cum.end()
                           ? static_cast<std::int64_t>(cum.size()) - 1
                           : static_cast<std::int64_t>(it - cum.begin());
    const auto tuple = spec.tuple_from_index(idx);
    for (int f = 0; f < spec.k(); ++f) out(r, f) = tuple[static_cast<std::size_t>(f)];
  }
  return out;
}

FactorWorld::FactorWorld(const WorldConfig& config) : cfg_(config) {
  cfg_.spec.validate();
  const int k = cfg_.spec.k();
  if (cfg_.observation_dim < k)
    throw ConfigError("observation_dim must be >= number of factors");
  if (cfg_.mixing_depth < 0) throw ConfigError("mixing_depth must be >= 0");
  if (cfg_.noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
  if (cfg_.identity_mixing && cfg_.mixing_depth != 0)
    throw ConfigError("identity mixing requires mixing_depth == 0");

  if (cfg_.identity_mixing) {
    Mat w(cfg_.observation_dim, k, 0.0);
    for (int i = 0; i < k; ++i) w(i, i) = 1.0;
    weights_.push_back(std::move(w));
    biases_.emplace_back(static_cast<std::size_t>(cfg_.observation_dim), 0.0);
    return;
  }

  Rng rng(derive_seed(cfg_.mixing_seed, {0x6d6978}));
  std::vector<std::int64_t> dims;
  dims.push_back(k);
  for (int d = 0; d < cfg_.mixing_depth; ++d) dims.push_back(cfg_.observation_dim);
  dims.push_back(cfg_.observation_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::int64_t in = dims[l], out = dims[l + 1];
    const double scale = 1.5 / std::sqrt(static_cast<double>(in));
    Mat w(out, in);
    for (auto& v : w.a) v = rng.normal() * scale;
    std::vector<double> b(static_cast<std::size_t>(out));
    for (auto& v : b) v = rng.normal() * 0.2;
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

Mat FactorWorld::normalize(const IMat& factors) const {
  if (factors.cols != cfg_.spec.k())
    throw ConfigError("factor table has wrong number of columns");
  Mat z(factors.rows, factors.cols);
  for (std::int64_t r = 0; r < factors.rows; ++r)
    for (std::int64_t c = 0; c < factors.cols; ++c)
      z(r, c) = cfg_.spec.normalized(static_cast<int>(c), factors(r, c));
  return z;
}

Mat FactorWorld::mix(const Mat& normalized) const {
  Mat cur = normalized;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Mat& w = weights_[l];
    const auto& b = biases_[l];
    Mat next(cur.rows, w.rows);
    for (std::int64_t r = 0; r < cur.rows; ++r) {
      const double* in = cur.row(r);
      double* out = next.row(r);
      for (std::int64_t o = 0; o < w.rows; ++o) {
        double acc = b[static_cast<std::size_t>(o)];
        const double* wrow = w.row(o);
        for (std::int64_t i = 0; i < w.cols; ++i) acc += wrow[i] * in[i];
        out[o] = acc;
      }
    }
    const bool last = l + 1 == weights_.size();
    if (!last)
      for (auto& v : next.a) v = std::tanh(v);
    cur = std::move(next);
  }
  return cur;
}

Mat FactorWorld::render(const IMat& factors, std::uint64_t noise_seed) const {
  Mat obs = mix(normalize(factors));
  if (cfg_.noise_scale > 0.0) {
    Rng rng(derive_seed(noise_seed, {0x6e6f697365}));
    for (auto& v : obs.a) v += cfg_.noise_scale * rng.normal();
  }
  return obs;
}

FactorDataset sample_dataset(const FactorWorld& world,
                             const CorrelationSpec& corr, std::int64_t n,
                             std::uint64_t seed) {
  FactorDataset d;
  d.factors = sample_factors(world.spec(), corr, n, derive_seed(seed, {1}));
  d.observations = world.render(d.factors, derive_seed(seed, {2}));
  d.normalized = world.normalize(d.factors);
  return d;
}

std::pair<FactorDataset, FactorDataset> make_splits(
    const FactorWorld& world, const CorrelationSpec& corr_train,
    const CorrelationSpec& corr_test, std::int64_t n_train,
    std::int64_t n_test, std::uint64_t seed) {
  return {sample_dataset(world, corr_train, n_train, derive_seed(seed, {10})),
          sample_dataset(world, corr_test, n_test, derive_seed(seed, {20}))};
}

void to_json(nlohmann::json& j, const FactorSpec& s) {
  j = {{"cardinalities", s.cardinalities}, {"names", s.names}};
}
void from_json(const nlohmann::json& j, FactorSpec& s) {
  j.at("cardinalities").get_to(s.cardinalities);
  s.names = j.value("names", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const CorrPair& p) {
  j = {{"i", p.i}, {"j", p.j}, {"sigma", p.sigma}, {"inverted", p.inverted}};
}
void from_json(const nlohmann::json& j, CorrPair& p) {
  j.at("i").get_to(p.i);
  j.at("j").get_to(p.j);
  j.at("sigma").get_to(p.sigma);
  p.inverted = j.value("inverted", false);
}

void to_json(nlohmann::json& j, const Confounder& c) {
  j = {{"factor", c.factor}, {"sigma", c.sigma}};
}
void from_json(const nlohmann::json& j, Confounder& c) {
  j.at("factor").get_to(c.factor);
  j.at("sigma").get_to(c.sigma);
}

void to_json(nlohmann::json& j, const CorrelationSpec& c) {
  j = {{"label", c.label}, {"pairs", c.pairs}};
  if (c.confounder.has_value()) j["confounder"] = *c.confounder;
}
void from_json(const nlohmann::json& j, CorrelationSpec& c) {
  c.label = j.value("label", "custom");
  c.pairs = j.value("pairs", std::vector<CorrPair>{});
  if (j.contains("confounder") && !j.at("confounder").is_null())
    c.confounder = j.at("confounder").get<Confounder>();
  else
    c.confounder.reset();
}

void to_json(nlohmann::json& j, const WorldConfig& w) {
  j = {{"spec", w.spec},
       {"observation_dim", w.observation_dim},
       {"mixing_depth", w.mixing_depth},
       {"noise_scale", w.noise_scale},
       {"mixing_seed", w.mixing_seed},
       {"identity_mixing", w.identity_mixing}};
}
void from_json(const nlohmann::json& j, WorldConfig& w) {
  w = WorldConfig{};
  if (j.contains("spec")) j.at("spec").get_to(w.spec);
  w.observation_dim = j.value("observation_dim", w.observation_dim);
  w.mixing_depth = j.value("mixing_depth", w.mixing_depth);
  w.noise_scale = j.value("noise_scale", w.noise_scale);
  w.mixing_seed = j.value("mixing_seed", w.mixing_seed);
  w.identity_mixing = j.value("identity_mixing", w.identity_mixing);
}

}  // namespace hfslab
