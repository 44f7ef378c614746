#pragma once

#include <vector>

#include "hfslab/tensor.hpp"

namespace hfslab {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment state is keyed by parameter order, so
// the parameter list must stay stable across steps.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  void zero_grad();
  void step();

  std::int64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace hfslab
