#include "hfslab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace hfslab {

namespace {

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape())
    throw ContractError("operands live on different tapes");
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ConfigError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                    " and " + shape_str(b));
}

}  // namespace

TensorNode* Tape::alloc(Shape shape, std::int64_t n) {
  nodes_.emplace_back();
  TensorNode* node = &nodes_.back();
  node->shape = std::move(shape);
  node->value.assign(static_cast<std::size_t>(n), 0.0);
  return node;
}

Tensor Tape::constant(Shape shape, std::vector<double> value) {
  if (numel(shape) != static_cast<std::int64_t>(value.size()))
    throw ConfigError("constant: shape " + shape_str(shape) +
                      " does not match " + std::to_string(value.size()) +
                      " values");
  nodes_.emplace_back();
  TensorNode* node = &nodes_.back();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = false;
  return Tensor(node, this);
}

Tensor Tape::leaf(Shape shape, std::vector<double> value) {
  Tensor t = constant(std::move(shape), std::move(value));
  t.node()->requires_grad = true;
  return t;
}

Tensor Tape::mount(Parameter& p) {
  Tensor t = constant(p.shape, p.value);
  TensorNode* node = t.node();
  node->requires_grad = p.trainable;
  if (p.trainable) {
    node->param = &p;
    Parameter* pp = &p;
    node->backward = [node, pp]() {
      node->ensure_grad();
      for (std::size_t i = 0; i < pp->grad.size(); ++i)
        pp->grad[i] += node->grad[i];
    };
  }
  return t;
}

Tensor Tape::scalar_with_grad(const Tensor& input, double value,
                              std::vector<double> grad_wrt_input) {
  if (input.tape() != this)
    throw ContractError("scalar_with_grad: input lives on another tape");
  if (static_cast<std::int64_t>(grad_wrt_input.size()) != input.numel())
    throw ConfigError("scalar_with_grad: gradient size mismatch");
  Tensor out = constant({}, {value});
  TensorNode* o = out.node();
  TensorNode* in = input.node();
  o->requires_grad = in->requires_grad;
  if (o->requires_grad) {
    auto g = std::make_shared<std::vector<double>>(std::move(grad_wrt_input));
    o->backward = [o, in, g]() {
      in->ensure_grad();
      const double u = o->grad[0];
      for (std::size_t i = 0; i < g->size(); ++i) in->grad[i] += u * (*g)[i];
    };
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this)
    throw ContractError("backward: loss lives on another tape");
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  TensorNode* root = loss.node();
  root->ensure_grad();
  root->grad[0] = 1.0;
  bool seen_root = false;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    TensorNode* n = &*it;
    if (!seen_root) {
      if (n == root)
        seen_root = true;
      else
        continue;  // recorded after the loss, cannot contribute
    }
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

namespace {

enum class BinKind { kAdd, kSub, kMul, kDiv };

double bin_fwd(BinKind k, double x, double y) {
  switch (k) {
    case BinKind::kAdd: return x + y;
    case BinKind::kSub: return x - y;
    case BinKind::kMul: return x * y;
    case BinKind::kDiv: return x / y;
  }
  return 0.0;
}

Tensor binary_op(const char* name, BinKind kind, const Tensor& a,
                 const Tensor& b) {
  check_same_tape(a, b);
  Tape& tape = *a.tape();
  TensorNode* an = a.node();
  TensorNode* bn = b.node();

  // broadcast = 0: exact shape match; +1: b is rank-1 broadcast over the
  // rows of rank-2 a; -1: the mirror case.
  int broadcast = 0;
  if (an->shape == bn->shape) {
    broadcast = 0;
  } else if (an->shape.size() == 2 && bn->shape.size() == 1 &&
             an->shape[1] == bn->shape[0]) {
    broadcast = 1;
  } else if (bn->shape.size() == 2 && an->shape.size() == 1 &&
             bn->shape[1] == an->shape[0]) {
    broadcast = -1;
  } else {
    shape_error(name, an->shape, bn->shape);
  }

  const Shape& out_shape = broadcast >= 0 ? an->shape : bn->shape;
  const std::int64_t n = numel(out_shape);
  TensorNode* o = tape.alloc(out_shape, n);
  const std::int64_t cols = broadcast == 0 ? 0 : (broadcast > 0 ? bn->shape[0] : an->shape[0]);

  for (std::int64_t i = 0; i < n; ++i) {
    const double x = broadcast == -1 ? an->value[static_cast<std::size_t>(i % cols)]
                                     : an->value[static_cast<std::size_t>(i)];
    const double y = broadcast == 1 ? bn->value[static_cast<std::size_t>(i % cols)]
                                    : bn->value[static_cast<std::size_t>(i)];
    o->value[static_cast<std::size_t>(i)] = bin_fwd(kind, x, y);
  }

  o->requires_grad = an->requires_grad || bn->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, bn, kind, broadcast, cols, n]() {
      an->ensure_grad();
      bn->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t ia =
            broadcast == -1 ? static_cast<std::size_t>(i % cols) : static_cast<std::size_t>(i);
        const std::size_t ib =
            broadcast == 1 ? static_cast<std::size_t>(i % cols) : static_cast<std::size_t>(i);
        const double u = o->grad[static_cast<std::size_t>(i)];
        const double x = an->value[ia];
        const double y = bn->value[ib];
        switch (kind) {
          case BinKind::kAdd:
            an->grad[ia] += u;
            bn->grad[ib] += u;
            break;
          case BinKind::kSub:
            an->grad[ia] += u;
            bn->grad[ib] -= u;
            break;
          case BinKind::kMul:
            an->grad[ia] += u * y;
            bn->grad[ib] += u * x;
            break;
          case BinKind::kDiv:
            an->grad[ia] += u / y;
            bn->grad[ib] -= u * x / (y * y);
            break;
        }
      }
    };
  }
  return tape.wrap(o);
}

Tensor unary_op(const Tensor& a, double (*fwd)(double),
                double (*dydx)(double x, double y)) {
  Tape& tape = *a.tape();
  TensorNode* an = a.node();
  const std::int64_t n = an->numel();
  TensorNode* o = tape.alloc(an->shape, n);
  for (std::int64_t i = 0; i < n; ++i)
    o->value[static_cast<std::size_t>(i)] = fwd(an->value[static_cast<std::size_t>(i)]);
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, dydx, n]() {
      an->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        an->grad[k] += o->grad[k] * dydx(an->value[k], o->value[k]);
      }
    };
  }
  return tape.wrap(o);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op("div", BinKind::kDiv, a, b); }

Tensor add(const Tensor& a, double c) {
  Tape& tape = *a.tape();
  TensorNode* an = a.node();
  const std::int64_t n = an->numel();
  TensorNode* o = tape.alloc(an->shape, n);
  for (std::int64_t i = 0; i < n; ++i)
    o->value[static_cast<std::size_t>(i)] = an->value[static_cast<std::size_t>(i)] + c;
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, n]() {
      an->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        an->grad[static_cast<std::size_t>(i)] += o->grad[static_cast<std::size_t>(i)];
    };
  }
  return tape.wrap(o);
}

Tensor mul(const Tensor& a, double c) {
  Tape& tape = *a.tape();
  TensorNode* an = a.node();
  const std::int64_t n = an->numel();
  TensorNode* o = tape.alloc(an->shape, n);
  for (std::int64_t i = 0; i < n; ++i)
    o->value[static_cast<std::size_t>(i)] = an->value[static_cast<std::size_t>(i)] * c;
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, c, n]() {
      an->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        an->grad[static_cast<std::size_t>(i)] += o->grad[static_cast<std::size_t>(i)] * c;
    };
  }
  return tape.wrap(o);
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  if (an->shape.size() != 2 || bn->shape.size() != 2 ||
      an->shape[1] != bn->shape[0])
    shape_error("matmul", an->shape, bn->shape);
  const std::int64_t m = an->shape[0], k = an->shape[1], n = bn->shape[1];
  Tape& tape = *a.tape();
  TensorNode* o = tape.alloc({m, n}, m * n);

  const double* A = an->value.data();
  const double* B = bn->value.data();
  double* C = o->value.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }

  o->requires_grad = an->requires_grad || bn->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, bn, m, k, n]() {
      an->ensure_grad();
      bn->ensure_grad();
      const double* U = o->grad.data();
      const double* A = an->value.data();
      const double* B = bn->value.data();
      // dA += U * B^T
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* urow = U + i * n;
          const double* brow = B + p * n;
          for (std::int64_t j = 0; j < n; ++j) acc += urow[j] * brow[j];
          an->grad[static_cast<std::size_t>(i * k + p)] += acc;
        }
      // dB += A^T * U
      for (std::int64_t p = 0; p < k; ++p)
        for (std::int64_t i = 0; i < m; ++i) {
          const double av = A[i * k + p];
          const double* urow = U + i * n;
          double* grow = bn->grad.data() + p * n;
          for (std::int64_t j = 0; j < n; ++j) grow[j] += av * urow[j];
        }
    };
  }
  return tape.wrap(o);
}

namespace {

Tensor reduce_full(const Tensor& a, bool take_mean) {
  Tape& tape = *a.tape();
  TensorNode* an = a.node();
  const std::int64_t n = an->numel();
  if (n == 0) throw ConfigError("reduce: empty tensor");
  double acc = 0.0;
  for (double v : an->value) acc += v;
  const double scale = take_mean ? 1.0 / static_cast<double>(n) : 1.0;
  TensorNode* o = tape.alloc({}, 1);
  o->value[0] = acc * scale;
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, scale, n]() {
      an->ensure_grad();
      const double u = o->grad[0] * scale;
      for (std::int64_t i = 0; i < n; ++i) an->grad[static_cast<std::size_t>(i)] += u;
    };
  }
  return tape.wrap(o);
}

Tensor reduce_axis(const char* name, const Tensor& a, int axis, bool take_mean) {
  Tape& tape = *a.tape();
  TensorNode* an = a.node();
  if (an->shape.size() == 1) {
    if (axis != 0) throw ConfigError(std::string(name) + ": axis out of range for rank-1");
    return reduce_full(a, take_mean);
  }
  if (an->shape.size() != 2 || (axis != 0 && axis != 1))
    throw ConfigError(std::string(name) + ": needs a rank-2 tensor and axis 0 or 1, got " +
                      shape_str(an->shape));
  const std::int64_t rows = an->shape[0], cols = an->shape[1];
  const std::int64_t out_n = axis == 0 ? cols : rows;
  const std::int64_t red_n = axis == 0 ? rows : cols;
  const double scale = take_mean ? 1.0 / static_cast<double>(red_n) : 1.0;
  TensorNode* o = tape.alloc({out_n}, out_n);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) {
      const double v = an->value[static_cast<std::size_t>(i * cols + j)];
      o->value[static_cast<std::size_t>(axis == 0 ? j : i)] += v;
    }
  if (take_mean)
    for (auto& v : o->value) v *= scale;
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, rows, cols, axis, scale]() {
      an->ensure_grad();
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) {
          const double u = o->grad[static_cast<std::size_t>(axis == 0 ? j : i)];
          an->grad[static_cast<std::size_t>(i * cols + j)] += u * scale;
        }
    };
  }
  return tape.wrap(o);
}

// Min/max over an axis with the gradient routed to the selected element;
// ties select the lowest index along the reduced axis.
Tensor extremum_axis(const char* name, const Tensor& a, int axis, bool is_max) {
  Tape& tape = *a.tape();
  TensorNode* an = a.node();

  auto better = [is_max](double cand, double best) {
    return is_max ? cand > best : cand < best;
  };

  if (an->shape.size() == 1) {
    if (axis != 0) throw ConfigError(std::string(name) + ": axis out of range for rank-1");
    const std::int64_t n = an->numel();
    if (n == 0) throw ConfigError(std::string(name) + ": empty tensor");
    std::int64_t arg = 0;
    double best = an->value[0];
    for (std::int64_t i = 1; i < n; ++i)
      if (better(an->value[static_cast<std::size_t>(i)], best)) {
        best = an->value[static_cast<std::size_t>(i)];
        arg = i;
      }
    TensorNode* o = tape.alloc({}, 1);
    o->value[0] = best;
    o->requires_grad = an->requires_grad;
    if (o->requires_grad) {
      o->backward = [o, an, arg]() {
        an->ensure_grad();
        an->grad[static_cast<std::size_t>(arg)] += o->grad[0];
      };
    }
    return tape.wrap(o);
  }

  if (an->shape.size() != 2 || (axis != 0 && axis != 1))
    throw ConfigError(std::string(name) + ": needs a rank-2 tensor and axis 0 or 1, got " +
                      shape_str(an->shape));
  const std::int64_t rows = an->shape[0], cols = an->shape[1];
  const std::int64_t out_n = axis == 0 ? cols : rows;
  TensorNode* o = tape.alloc({out_n}, out_n);
  auto args = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out_n), 0);
  if (axis == 0) {
    for (std::int64_t j = 0; j < cols; ++j) {
      double best = an->value[static_cast<std::size_t>(j)];
      std::int64_t arg = 0;
      for (std::int64_t i = 1; i < rows; ++i) {
        const double v = an->value[static_cast<std::size_t>(i * cols + j)];
        if (better(v, best)) {
          best = v;
          arg = i;
        }
      }
      o->value[static_cast<std::size_t>(j)] = best;
      (*args)[static_cast<std::size_t>(j)] = arg;
    }
  } else {
    for (std::int64_t i = 0; i < rows; ++i) {
      double best = an->value[static_cast<std::size_t>(i * cols)];
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < cols; ++j) {
        const double v = an->value[static_cast<std::size_t>(i * cols + j)];
        if (better(v, best)) {
          best = v;
          arg = j;
        }
      }
      o->value[static_cast<std::size_t>(i)] = best;
      (*args)[static_cast<std::size_t>(i)] = arg;
    }
  }
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, args, out_n, cols, axis]() {
      an->ensure_grad();
      for (std::int64_t t = 0; t < out_n; ++t) {
        const std::int64_t arg = (*args)[static_cast<std::size_t>(t)];
        const std::int64_t flat = axis == 0 ? arg * cols + t : t * cols + arg;
        an->grad[static_cast<std::size_t>(flat)] += o->grad[static_cast<std::size_t>(t)];
      }
    };
  }
  return tape.wrap(o);
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_full(a, false); }
Tensor mean(const Tensor& a) { return reduce_full(a, true); }
Tensor sum(const Tensor& a, int axis) { return reduce_axis("sum", a, axis, false); }
Tensor mean(const Tensor& a, int axis) { return reduce_axis("mean", a, axis, true); }
Tensor min_axis(const Tensor& a, int axis) { return extremum_axis("min_axis", a, axis, false); }
Tensor max_axis(const Tensor& a, int axis) { return extremum_axis("max_axis", a, axis, true); }

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  if (an->shape.size() != 2 || bn->shape.size() != 2 ||
      an->shape[0] != bn->shape[0])
    shape_error("concat_cols", an->shape, bn->shape);
  const std::int64_t rows = an->shape[0], ca = an->shape[1], cb = bn->shape[1];
  Tape& tape = *a.tape();
  TensorNode* o = tape.alloc({rows, ca + cb}, rows * (ca + cb));
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < ca; ++j)
      o->value[static_cast<std::size_t>(i * (ca + cb) + j)] =
          an->value[static_cast<std::size_t>(i * ca + j)];
    for (std::int64_t j = 0; j < cb; ++j)
      o->value[static_cast<std::size_t>(i * (ca + cb) + ca + j)] =
          bn->value[static_cast<std::size_t>(i * cb + j)];
  }
  o->requires_grad = an->requires_grad || bn->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, bn, rows, ca, cb]() {
      an->ensure_grad();
      bn->ensure_grad();
      for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < ca; ++j)
          an->grad[static_cast<std::size_t>(i * ca + j)] +=
              o->grad[static_cast<std::size_t>(i * (ca + cb) + j)];
        for (std::int64_t j = 0; j < cb; ++j)
          bn->grad[static_cast<std::size_t>(i * cb + j)] +=
              o->grad[static_cast<std::size_t>(i * (ca + cb) + ca + j)];
      }
    };
  }
  return tape.wrap(o);
}

Tensor index_select(const Tensor& a, int axis,
                    const std::vector<std::int64_t>& indices) {
  TensorNode* an = a.node();
  Tape& tape = *a.tape();
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices);

  if (an->shape.size() == 1) {
    if (axis != 0) throw ConfigError("index_select: axis out of range for rank-1");
    const std::int64_t n = an->numel();
    for (auto i : *idx)
      if (i < 0 || i >= n) throw ConfigError("index_select: index out of range");
    const std::int64_t m = static_cast<std::int64_t>(idx->size());
    TensorNode* o = tape.alloc({m}, m);
    for (std::int64_t t = 0; t < m; ++t)
      o->value[static_cast<std::size_t>(t)] =
          an->value[static_cast<std::size_t>((*idx)[static_cast<std::size_t>(t)])];
    o->requires_grad = an->requires_grad;
    if (o->requires_grad) {
      o->backward = [o, an, idx, m]() {
        an->ensure_grad();
        for (std::int64_t t = 0; t < m; ++t)
          an->grad[static_cast<std::size_t>((*idx)[static_cast<std::size_t>(t)])] +=
              o->grad[static_cast<std::size_t>(t)];
      };
    }
    return tape.wrap(o);
  }

  if (an->shape.size() != 2 || (axis != 0 && axis != 1))
    throw ConfigError("index_select: needs rank-1 or rank-2 tensor and axis 0/1");
  const std::int64_t rows = an->shape[0], cols = an->shape[1];
  const std::int64_t bound = axis == 0 ? rows : cols;
  for (auto i : *idx)
    if (i < 0 || i >= bound) throw ConfigError("index_select: index out of range");
  const std::int64_t m = static_cast<std::int64_t>(idx->size());

  if (axis == 0) {
    TensorNode* o = tape.alloc({m, cols}, m * cols);
    for (std::int64_t t = 0; t < m; ++t) {
      const std::int64_t src = (*idx)[static_cast<std::size_t>(t)];
      for (std::int64_t j = 0; j < cols; ++j)
        o->value[static_cast<std::size_t>(t * cols + j)] =
            an->value[static_cast<std::size_t>(src * cols + j)];
    }
    o->requires_grad = an->requires_grad;
    if (o->requires_grad) {
      o->backward = [o, an, idx, m, cols]() {
        an->ensure_grad();
        for (std::int64_t t = 0; t < m; ++t) {
          const std::int64_t src = (*idx)[static_cast<std::size_t>(t)];
          for (std::int64_t j = 0; j < cols; ++j)
            an->grad[static_cast<std::size_t>(src * cols + j)] +=
                o->grad[static_cast<std::size_t>(t * cols + j)];
        }
      };
    }
    return tape.wrap(o);
  }

  TensorNode* o = tape.alloc({rows, m}, rows * m);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t t = 0; t < m; ++t)
      o->value[static_cast<std::size_t>(i * m + t)] =
          an->value[static_cast<std::size_t>(i * cols + (*idx)[static_cast<std::size_t>(t)])];
  o->requires_grad = an->requires_grad;
  if (o->requires_grad) {
    o->backward = [o, an, idx, rows, cols, m]() {
      an->ensure_grad();
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t t = 0; t < m; ++t)
          an->grad[static_cast<std::size_t>(i * cols + (*idx)[static_cast<std::size_t>(t)])] +=
              o->grad[static_cast<std::size_t>(i * m + t)];
    };
  }
  return tape.wrap(o);
}

}  // namespace hfslab
