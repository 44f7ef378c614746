#pragma once

#include <string>

#include "hfslab/factor_world.hpp"

namespace hfslab {

// On-disk dataset layout for a basename `p`:
//   p.json           sidecar (world config, correlation, seed, row count)
//   p.factors.bin    int32 little-endian, row-major [n, k]
//   p.obs.bin        float64 little-endian, row-major [n, observation_dim]
void save_dataset(const FactorDataset& d, const WorldConfig& world,
                  const CorrelationSpec& corr, std::uint64_t seed,
                  const std::string& basename);

struct LoadedDataset {
  FactorDataset data;
  WorldConfig world;
  CorrelationSpec corr;
  std::uint64_t seed = 0;
};

LoadedDataset load_dataset(const std::string& basename);

// Plain numeric CSV (no header), one row per line.
void save_csv(const Mat& m, const std::string& path);
Mat load_csv(const std::string& path);

}  // namespace hfslab
