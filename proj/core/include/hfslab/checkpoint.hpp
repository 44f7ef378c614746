#pragma once

#include <string>
#include <vector>

#include "hfslab/tensor.hpp"

namespace hfslab {

// Checkpoint layout: <prefix>.bin holds all parameter values as consecutive
// 64-bit little-endian doubles; <prefix>.json is a manifest listing, per
// parameter, its name, shape, and byte offset into the binary blob.
void save_checkpoint(const std::vector<const Parameter*>& params,
                     const std::string& prefix);

// Loads values into the given parameters, matching manifest entries by
// name and validating shapes. Missing or mismatched entries raise.
void load_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& prefix);

}  // namespace hfslab
