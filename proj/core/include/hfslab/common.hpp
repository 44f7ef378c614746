#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfslab {

// Shape of a tensor. Rank 0 (empty) denotes a scalar, rank 1 a vector,
// rank 2 a matrix. Nothing in this library needs rank 3 or higher.
using Shape = std::vector<std::int64_t>;

// Raised when a caller hands in values that violate a documented
// precondition (bad shapes, bad config fields, out-of-range arguments).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an internal contract is broken mid-computation (non-finite
// activations, undefined metric, corrupt file).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

// Dense row-major matrix of doubles. This is the plain (non-differentiable)
// container used by the data, metric, and harness layers.
struct Mat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::int64_t r, std::int64_t c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<std::size_t>(r * c), fill) {}
  Mat(std::int64_t r, std::int64_t c, std::vector<double> values)
      : rows(r), cols(c), a(std::move(values)) {
    if (static_cast<std::int64_t>(a.size()) != r * c)
      throw ConfigError("matrix literal size mismatch");
  }

  double& operator()(std::int64_t r, std::int64_t c) {
    return a[static_cast<std::size_t>(r * cols + c)];
  }
  double operator()(std::int64_t r, std::int64_t c) const {
    return a[static_cast<std::size_t>(r * cols + c)];
  }
  const double* row(std::int64_t r) const { return a.data() + r * cols; }
  double* row(std::int64_t r) { return a.data() + r * cols; }
};

// Row-major matrix of 32-bit ints (factor index tables).
struct IMat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int32_t> a;

  IMat() = default;
  IMat(std::int64_t r, std::int64_t c, std::int32_t fill = 0)
      : rows(r), cols(c), a(static_cast<std::size_t>(r * c), fill) {}
  IMat(std::int64_t r, std::int64_t c, std::vector<std::int32_t> values)
      : rows(r), cols(c), a(std::move(values)) {
    if (static_cast<std::int64_t>(a.size()) != r * c)
      throw ConfigError("matrix literal size mismatch");
  }

  std::int32_t& operator()(std::int64_t r, std::int64_t c) {
    return a[static_cast<std::size_t>(r * cols + c)];
  }
  std::int32_t operator()(std::int64_t r, std::int64_t c) const {
    return a[static_cast<std::size_t>(r * cols + c)];
  }
  const std::int32_t* row(std::int64_t r) const { return a.data() + r * cols; }
};

}  // namespace hfslab
