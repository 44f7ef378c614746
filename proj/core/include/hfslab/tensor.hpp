#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hfslab/common.hpp"

namespace hfslab {

class Tape;

// A named trainable array. Parameters live outside any tape; a forward pass
// mounts them onto a tape as leaves and backward() accumulates the resulting
// gradient back into Parameter::grad.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Shape s, std::vector<double> v)
      : name(std::move(n)), shape(std::move(s)), value(std::move(v)) {
    if (numel(shape) != static_cast<std::int64_t>(value.size()))
      throw ConfigError("parameter '" + name + "': shape " + shape_str(shape) +
                        " does not match " + std::to_string(value.size()) +
                        " values");
    grad.assign(value.size(), 0.0);
  }

  void zero_grad() { grad.assign(value.size(), 0.0); }
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void()> backward;  // pulls this->grad into the parents
  Parameter* param = nullptr;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

// Lightweight handle to a node on a tape. Valid only while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
  const std::vector<double>& value() const { return node_->value; }
  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  // Value of a one-element tensor.
  double item() const {
    if (node_->numel() != 1)
      throw ContractError("item() on non-scalar tensor of shape " +
                          shape_str(node_->shape));
    return node_->value[0];
  }

  TensorNode* node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Tensor(TensorNode* n, Tape* t) : node_(n), tape_(t) {}

  TensorNode* node_ = nullptr;
  Tape* tape_ = nullptr;
};

// Append-only record of one forward computation. Operands are always
// recorded before their results, so a single reverse sweep from the loss
// node visits every dependency in a valid order. Distinct tapes share no
// state: gradients never leak across tapes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Non-trainable input data.
  Tensor constant(Shape shape, std::vector<double> value);
  Tensor scalar(double v) { return constant({}, {v}); }

  // Trainable leaf owned by the tape (used in tests and small fits).
  Tensor leaf(Shape shape, std::vector<double> value);

  // Mounts a Parameter; backward() adds the leaf gradient into p.grad.
  Tensor mount(Parameter& p);

  // Records a scalar-valued node whose gradient with respect to `input` was
  // computed by the caller. Extension point for estimators with hand-derived
  // gradients; everything else should use the regular ops.
  Tensor scalar_with_grad(const Tensor& input, double value,
                          std::vector<double> grad_wrt_input);

  // Reverse sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
  // accumulates into every reachable leaf and mounted Parameter.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

  TensorNode* alloc(Shape shape, std::int64_t n);
  Tensor wrap(TensorNode* n) { return Tensor(n, this); }

 private:
  std::deque<TensorNode> nodes_;  // stable addresses
};

// Elementwise binary ops. Shapes must match exactly, or one operand may be a
// rank-1 vector matching the trailing dimension of a rank-2 operand, in
// which case it broadcasts along the leading batch axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Scalar-constant variants.
Tensor add(const Tensor& a, double c);
Tensor mul(const Tensor& a, double c);
Tensor neg(const Tensor& a);

// Elementwise unary ops.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Matrix product of two rank-2 tensors: [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Reductions. The no-axis forms reduce everything to a scalar. The axis
// forms act on rank-2 tensors (axis 0 reduces rows, axis 1 reduces columns)
// or reduce a rank-1 tensor to a scalar with axis 0.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);

// Min/max reductions route the gradient to the selected element only; ties
// select the lowest index.
Tensor min_axis(const Tensor& a, int axis);
Tensor max_axis(const Tensor& a, int axis);

// Concatenates two rank-2 tensors along columns: [r,c1] + [r,c2] -> [r,c1+c2].
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Gathers rows (axis 0) or columns (axis 1); indices may repeat. The
// gradient scatter-adds back into the source.
Tensor index_select(const Tensor& a, int axis,
                    const std::vector<std::int64_t>& indices);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace hfslab
