// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape over dense rank-2 arrays.
//
// Every backward rule is written with the same differentiable operations the
// forward pass uses. Running the backward pass with recording enabled therefore
// appends the gradient computation to the tape as ordinary nodes, and a second
// backward pass over those nodes differentiates through the first gradient.
// That is what makes "gradient of a loss evaluated after a gradient step"
// exact instead of a first-order approximation.
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "metanlg/error.hpp"
#include "metanlg/numeric_array.hpp"

namespace metanlg::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Affine,  // scale * x + shift
  Negate,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Reciprocal,
  Softmax,     // row-wise
  LogSoftmax,  // row-wise
  Sum,         // all elements -> 1x1
  SumRows,     // m x n -> 1 x n
  SumCols,     // m x n -> m x 1
  BroadcastRows,
  BroadcastCols,
  BroadcastScalar,
  ConcatCols,
  SliceCols,
  Embedding,    // gather rows of a table
  ScatterRows,  // adjoint of Embedding
  Dropout,      // multiply by a fixed mask (second input, never differentiated)
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Affine: return "affine";
    case OpKind::Negate: return "negate";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Reciprocal: return "reciprocal";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Sum: return "sum";
    case OpKind::SumRows: return "sum_rows";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::BroadcastRows: return "broadcast_rows";
    case OpKind::BroadcastCols: return "broadcast_cols";
    case OpKind::BroadcastScalar: return "broadcast_scalar";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::Embedding: return "embedding";
    case OpKind::ScatterRows: return "scatter_rows";
    case OpKind::Dropout: return "dropout";
  }
  return "unknown";
}

struct OpAttrs {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t rows = 0;  // broadcast / scatter target rows
  std::size_t cols = 0;  // broadcast target cols
  std::shared_ptr<const std::vector<std::size_t>> ids;
};

struct TapeNode {
  OpKind kind = OpKind::Constant;
  std::vector<int> inputs;  // all strictly smaller than the node's own id
  NumericArray value;
  OpAttrs attrs;
  bool requires_grad = false;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the node exists.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr && id_ >= 0; }
  Tape& tape() const { return *tape_; }
  Tape* tape_ptr() const noexcept { return tape_; }
  int id() const noexcept { return id_; }

  inline const NumericArray& value() const;
  inline bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(NumericArray value) { return push(OpKind::Leaf, {}, std::move(value), {}, true); }

  Var constant(NumericArray value) { return push(OpKind::Constant, {}, std::move(value), {}, false); }

  /// Evaluates `kind` on `inputs` and appends the result. Throws ShapeError for
  /// invalid shapes and NonFiniteError when the result is not finite.
  Var record(OpKind kind, const std::vector<Var>& inputs, OpAttrs attrs = {}) {
    if (kind == OpKind::Leaf || kind == OpKind::Constant) {
      throw Error(std::string("record: ") + op_name(kind) + " is not an operation");
    }
    std::vector<int> ids;
    ids.reserve(inputs.size());
    bool needs_grad = false;
    for (const Var& v : inputs) {
      if (v.tape_ptr() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
        throw Error(std::string(op_name(kind)) + ": input does not belong to this tape");
      }
      ids.push_back(v.id());
      needs_grad = needs_grad || nodes_[v.id()].requires_grad;
    }
    NumericArray out = evaluate(kind, ids, attrs);
    if (!out.all_finite()) {
      throw NonFiniteError(std::string(op_name(kind)) + " produced a non-finite value");
    }
    return push(kind, std::move(ids), std::move(out), std::move(attrs), needs_grad && grad_enabled_);
  }

  const TapeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool grad_enabled() const noexcept { return grad_enabled_; }
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }

  std::size_t mark() const noexcept { return nodes_.size(); }
  void truncate(std::size_t mark) {
    while (nodes_.size() > mark) nodes_.pop_back();
  }

  /// Gradient of a scalar `loss` w.r.t. `wrt`, recorded on the tape so the
  /// result can be differentiated again.
  std::vector<Var> gradient(Var loss, std::span<const Var> wrt) { return backward(loss, wrt, true); }

  /// Numeric gradient only. Scratch nodes from the backward pass are dropped.
  std::vector<NumericArray> gradient_values(Var loss, std::span<const Var> wrt) {
    const std::size_t start = mark();
    std::vector<NumericArray> out;
    try {
      std::vector<Var> g = backward(loss, wrt, false);
      out.reserve(g.size());
      for (const Var& v : g) out.push_back(v.value());
    } catch (...) {
      truncate(start);
      throw;
    }
    truncate(start);
    return out;
  }

 private:
  Var push(OpKind kind, std::vector<int> inputs, NumericArray value, OpAttrs attrs, bool requires_grad) {
    TapeNode n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.attrs = std::move(attrs);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  static void check_matrix(const NumericArray& a, OpKind kind) {
    if (a.rank() != 2) {
      throw ShapeError(std::string(op_name(kind)) + ": expected rank-2 input, got " +
                       NumericArray::shape_string(a.shape()));
    }
  }

  void arity(OpKind kind, const std::vector<int>& ids, std::size_t n) const {
    if (ids.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs, got " +
                       std::to_string(ids.size()));
    }
  }

  static ShapeError mismatch(OpKind kind, const NumericArray& a, const NumericArray& b) {
    return ShapeError(std::string(op_name(kind)) + ": shape mismatch " + NumericArray::shape_string(a.shape()) +
                      " vs " + NumericArray::shape_string(b.shape()));
  }

  template <class F>
  NumericArray unary(const NumericArray& a, F f) const {
    NumericArray out(a.shape());
    auto src = a.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
  }

  template <class F>
  NumericArray binary(OpKind kind, const NumericArray& a, const NumericArray& b, F f) const {
    if (!a.same_shape(b)) throw mismatch(kind, a, b);
    NumericArray out(a.shape());
    auto x = a.values();
    auto y = b.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
    return out;
  }

  NumericArray evaluate(OpKind kind, const std::vector<int>& ids, const OpAttrs& at) const {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    auto in = [&](std::size_t k) -> const NumericArray& { return nodes_[static_cast<std::size_t>(ids[k])].value; };
    for (int id : ids) check_matrix(nodes_[static_cast<std::size_t>(id)].value, kind);

    switch (kind) {
      case OpKind::MatMul: {
        arity(kind, ids, 2);
        const NumericArray& a = in(0);
        const NumericArray& b = in(1);
        if (a.cols() != b.rows()) throw mismatch(kind, a, b);
        NumericArray out = NumericArray::matrix(a.rows(), b.cols());
        Eigen::Map<const RowMat> ma(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
        Eigen::Map<const RowMat> mb(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
        Eigen::Map<RowMat> mc(out.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(b.cols()));
        mc.noalias() = ma * mb;
        return out;
      }
      case OpKind::Transpose: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        NumericArray out = NumericArray::matrix(a.cols(), a.rows());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
        return out;
      }
      case OpKind::Add:
        arity(kind, ids, 2);
        return binary(kind, in(0), in(1), [](double x, double y) { return x + y; });
      case OpKind::Sub:
        arity(kind, ids, 2);
        return binary(kind, in(0), in(1), [](double x, double y) { return x - y; });
      case OpKind::Mul:
        arity(kind, ids, 2);
        return binary(kind, in(0), in(1), [](double x, double y) { return x * y; });
      case OpKind::Dropout:
        arity(kind, ids, 2);
        return binary(kind, in(0), in(1), [](double x, double m) { return x * m; });
      case OpKind::Affine:
        arity(kind, ids, 1);
        return unary(in(0), [&](double x) { return at.scale * x + at.shift; });
      case OpKind::Negate:
        arity(kind, ids, 1);
        return unary(in(0), [](double x) { return -x; });
      case OpKind::Sigmoid:
        arity(kind, ids, 1);
        return unary(in(0), [](double x) {
          if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
          const double e = std::exp(x);
          return e / (1.0 + e);
        });
      case OpKind::Tanh:
        arity(kind, ids, 1);
        return unary(in(0), [](double x) { return std::tanh(x); });
      case OpKind::Exp:
        arity(kind, ids, 1);
        return unary(in(0), [](double x) { return std::exp(x); });
      case OpKind::Log:
        arity(kind, ids, 1);
        return unary(in(0), [](double x) { return std::log(x); });
      case OpKind::Reciprocal:
        arity(kind, ids, 1);
        return unary(in(0), [](double x) { return 1.0 / x; });
      case OpKind::Softmax:
      case OpKind::LogSoftmax: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        NumericArray out(a.shape());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double mx = a(r, 0);
          for (std::size_t c = 1; c < a.cols(); ++c) mx = std::max(mx, a(r, c));
          double z = 0.0;
          for (std::size_t c = 0; c < a.cols(); ++c) z += std::exp(a(r, c) - mx);
          if (kind == OpKind::Softmax) {
            for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = std::exp(a(r, c) - mx) / z;
          } else {
            const double lse = mx + std::log(z);
            for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) - lse;
          }
        }
        return out;
      }
      case OpKind::Sum: {
        arity(kind, ids, 1);
        double s = 0.0;
        for (double v : in(0).values()) s += v;
        return NumericArray::scalar(s);
      }
      case OpKind::SumRows: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        NumericArray out = NumericArray::matrix(1, a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
        return out;
      }
      case OpKind::SumCols: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        NumericArray out = NumericArray::matrix(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c);
          out(r, 0) = s;
        }
        return out;
      }
      case OpKind::BroadcastRows: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        if (a.rows() != 1) throw ShapeError("broadcast_rows: input must be a row vector");
        NumericArray out = NumericArray::matrix(at.rows, a.cols());
        for (std::size_t r = 0; r < at.rows; ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(0, c);
        return out;
      }
      case OpKind::BroadcastCols: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        if (a.cols() != 1) throw ShapeError("broadcast_cols: input must be a column vector");
        NumericArray out = NumericArray::matrix(a.rows(), at.cols);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < at.cols; ++c) out(r, c) = a(r, 0);
        return out;
      }
      case OpKind::BroadcastScalar: {
        arity(kind, ids, 1);
        return NumericArray::matrix(at.rows, at.cols, in(0).item());
      }
      case OpKind::ConcatCols: {
        if (ids.empty()) throw ShapeError("concat_cols: no inputs");
        const std::size_t rows = in(0).rows();
        std::size_t cols = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (in(k).rows() != rows) throw mismatch(kind, in(0), in(k));
          cols += in(k).cols();
        }
        NumericArray out = NumericArray::matrix(rows, cols);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const NumericArray& a = in(k);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < a.cols(); ++c) out(r, off + c) = a(r, c);
          off += a.cols();
        }
        return out;
      }
      case OpKind::SliceCols: {
        arity(kind, ids, 1);
        const NumericArray& a = in(0);
        if (at.begin >= at.end || at.end > a.cols()) {
          throw ShapeError("slice_cols: range [" + std::to_string(at.begin) + ", " + std::to_string(at.end) +
                           ") out of bounds for " + NumericArray::shape_string(a.shape()));
        }
        NumericArray out = NumericArray::matrix(a.rows(), at.end - at.begin);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = at.begin; c < at.end; ++c) out(r, c - at.begin) = a(r, c);
        return out;
      }
      case OpKind::Embedding: {
        arity(kind, ids, 1);
        const NumericArray& table = in(0);
        if (!at.ids) throw ShapeError("embedding: missing ids");
        NumericArray out = NumericArray::matrix(at.ids->size(), table.cols());
        for (std::size_t r = 0; r < at.ids->size(); ++r) {
          const std::size_t id = (*at.ids)[r];
          if (id >= table.rows()) {
            throw ShapeError("embedding: id " + std::to_string(id) + " out of range for " +
                             std::to_string(table.rows()) + " rows");
          }
          for (std::size_t c = 0; c < table.cols(); ++c) out(r, c) = table(id, c);
        }
        return out;
      }
      case OpKind::ScatterRows: {
        arity(kind, ids, 1);
        const NumericArray& g = in(0);
        if (!at.ids || at.ids->size() != g.rows()) throw ShapeError("scatter_rows: ids do not match input rows");
        NumericArray out = NumericArray::matrix(at.rows, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const std::size_t id = (*at.ids)[r];
          if (id >= at.rows) throw ShapeError("scatter_rows: id out of range");
          for (std::size_t c = 0; c < g.cols(); ++c) out(id, c) += g(r, c);
        }
        return out;
      }
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
    }
    throw Error(std::string("unsupported op kind: ") + op_name(kind));
  }

  inline std::vector<Var> backward(Var loss, std::span<const Var> wrt, bool create_graph);

  std::deque<TapeNode> nodes_;
  bool grad_enabled_ = true;
};

inline const NumericArray& Var::value() const { return tape_->node(id_).value; }
inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

/// Disables gradient recording for nodes created in scope.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& tape) : tape_(tape), saved_(tape.grad_enabled()) { tape_.set_grad_enabled(false); }
  ~NoGradGuard() { tape_.set_grad_enabled(saved_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool saved_;
};

// ---------------------------------------------------------------------------
// Operations

inline Var forward_op(OpKind kind, const std::vector<Var>& inputs, OpAttrs attrs = {}) {
  if (inputs.empty()) throw Error(std::string(op_name(kind)) + ": no inputs");
  return inputs.front().tape().record(kind, inputs, std::move(attrs));
}

inline Var matmul(Var a, Var b) { return forward_op(OpKind::MatMul, {a, b}); }
inline Var transpose(Var a) { return forward_op(OpKind::Transpose, {a}); }
inline Var operator+(Var a, Var b) { return forward_op(OpKind::Add, {a, b}); }
inline Var operator-(Var a, Var b) { return forward_op(OpKind::Sub, {a, b}); }
inline Var operator*(Var a, Var b) { return forward_op(OpKind::Mul, {a, b}); }
inline Var negate(Var a) { return forward_op(OpKind::Negate, {a}); }
inline Var operator-(Var a) { return negate(a); }

inline Var affine(Var a, double scale, double shift) {
  OpAttrs at;
  at.scale = scale;
  at.shift = shift;
  return forward_op(OpKind::Affine, {a}, at);
}
inline Var scale(Var a, double s) { return affine(a, s, 0.0); }

inline Var sigmoid(Var a) { return forward_op(OpKind::Sigmoid, {a}); }
inline Var tanh(Var a) { return forward_op(OpKind::Tanh, {a}); }
inline Var exp(Var a) { return forward_op(OpKind::Exp, {a}); }
inline Var log(Var a) { return forward_op(OpKind::Log, {a}); }
inline Var reciprocal(Var a) { return forward_op(OpKind::Reciprocal, {a}); }
inline Var softmax(Var a) { return forward_op(OpKind::Softmax, {a}); }
inline Var log_softmax(Var a) { return forward_op(OpKind::LogSoftmax, {a}); }
inline Var sum(Var a) { return forward_op(OpKind::Sum, {a}); }
inline Var sum_rows(Var a) { return forward_op(OpKind::SumRows, {a}); }
inline Var sum_cols(Var a) { return forward_op(OpKind::SumCols, {a}); }

inline Var broadcast_rows(Var a, std::size_t rows) {
  OpAttrs at;
  at.rows = rows;
  return forward_op(OpKind::BroadcastRows, {a}, at);
}

inline Var broadcast_cols(Var a, std::size_t cols) {
  OpAttrs at;
  at.cols = cols;
  return forward_op(OpKind::BroadcastCols, {a}, at);
}

inline Var broadcast_scalar(Var a, std::size_t rows, std::size_t cols) {
  OpAttrs at;
  at.rows = rows;
  at.cols = cols;
  return forward_op(OpKind::BroadcastScalar, {a}, at);
}

/// x (m x n) plus a 1 x n row vector added to every row.
inline Var add_row(Var x, Var row) { return x + broadcast_rows(row, x.rows()); }

inline Var concat_cols(const std::vector<Var>& parts) { return forward_op(OpKind::ConcatCols, parts); }

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  OpAttrs at;
  at.begin = begin;
  at.end = end;
  return forward_op(OpKind::SliceCols, {a}, at);
}

inline Var embedding(Var table, std::shared_ptr<const std::vector<std::size_t>> ids) {
  OpAttrs at;
  at.ids = std::move(ids);
  return forward_op(OpKind::Embedding, {table}, at);
}

inline Var embedding(Var table, std::vector<std::size_t> ids) {
  return embedding(table, std::make_shared<const std::vector<std::size_t>>(std::move(ids)));
}

inline Var scatter_rows(Var a, std::shared_ptr<const std::vector<std::size_t>> ids, std::size_t rows) {
  OpAttrs at;
  at.ids = std::move(ids);
  at.rows = rows;
  return forward_op(OpKind::ScatterRows, {a}, at);
}

/// Multiplies by a fixed mask; the mask never receives a gradient.
inline Var dropout(Var a, Var mask) { return forward_op(OpKind::Dropout, {a, mask}); }

// ---------------------------------------------------------------------------
// Backward pass

inline std::vector<Var> Tape::backward(Var loss, std::span<const Var> wrt, bool create_graph) {
  if (loss.tape_ptr() != this) throw Error("gradient: loss belongs to a different tape");
  if (!loss.value().is_scalar()) {
    throw ShapeError("gradient: loss must be scalar, got " + NumericArray::shape_string(loss.value().shape()));
  }
  for (const Var& w : wrt) {
    if (w.tape_ptr() != this) throw Error("gradient: parameter belongs to a different tape");
  }

  struct Restore {
    bool& flag;
    bool saved;
    ~Restore() { flag = saved; }
  } restore{grad_enabled_, grad_enabled_};
  grad_enabled_ = create_graph;

  const auto n = static_cast<std::size_t>(loss.id()) + 1;
  std::vector<int> grads(n, -1);
  grads[n - 1] = constant(NumericArray::scalar(1.0)).id();

  for (int i = loss.id(); i >= 0; --i) {
    const int g_id = grads[static_cast<std::size_t>(i)];
    if (g_id < 0) continue;
    const TapeNode& self = nodes_[static_cast<std::size_t>(i)];
    if (!self.requires_grad || self.kind == OpKind::Leaf) continue;

    // Copies: the rules below append to nodes_.
    const OpKind kind = self.kind;
    const std::vector<int> in = self.inputs;
    const OpAttrs at = self.attrs;

    const Var G(this, g_id);
    const Var Y(this, i);
    auto x = [&](std::size_t k) { return Var(this, in[k]); };
    auto needs = [&](std::size_t k) { return nodes_[static_cast<std::size_t>(in[k])].requires_grad; };
    auto give = [&](std::size_t k, Var contribution) {
      int& slot = grads[static_cast<std::size_t>(in[k])];
      slot = slot < 0 ? contribution.id() : (Var(this, slot) + contribution).id();
    };

    switch (kind) {
      case OpKind::MatMul:
        if (needs(0)) give(0, matmul(G, transpose(x(1))));
        if (needs(1)) give(1, matmul(transpose(x(0)), G));
        break;
      case OpKind::Transpose:
        give(0, transpose(G));
        break;
      case OpKind::Add:
        if (needs(0)) give(0, G);
        if (needs(1)) give(1, G);
        break;
      case OpKind::Sub:
        if (needs(0)) give(0, G);
        if (needs(1)) give(1, -G);
        break;
      case OpKind::Mul:
        if (needs(0)) give(0, G * x(1));
        if (needs(1)) give(1, G * x(0));
        break;
      case OpKind::Dropout:
        if (needs(0)) give(0, dropout(G, x(1)));
        break;
      case OpKind::Affine:
        give(0, scale(G, at.scale));
        break;
      case OpKind::Negate:
        give(0, -G);
        break;
      case OpKind::Sigmoid:
        give(0, G * (Y * affine(Y, -1.0, 1.0)));
        break;
      case OpKind::Tanh:
        give(0, G * affine(Y * Y, -1.0, 1.0));
        break;
      case OpKind::Exp:
        give(0, G * Y);
        break;
      case OpKind::Log:
        give(0, G * reciprocal(x(0)));
        break;
      case OpKind::Reciprocal:
        give(0, -(G * (Y * Y)));
        break;
      case OpKind::Softmax: {
        const std::size_t cols = Y.cols();
        give(0, Y * (G - broadcast_cols(sum_cols(G * Y), cols)));
        break;
      }
      case OpKind::LogSoftmax: {
        const std::size_t cols = Y.cols();
        give(0, G - exp(Y) * broadcast_cols(sum_cols(G), cols));
        break;
      }
      case OpKind::Sum: {
        const NumericArray& a = x(0).value();
        give(0, broadcast_scalar(G, a.rows(), a.cols()));
        break;
      }
      case OpKind::SumRows:
        give(0, broadcast_rows(G, x(0).rows()));
        break;
      case OpKind::SumCols:
        give(0, broadcast_cols(G, x(0).cols()));
        break;
      case OpKind::BroadcastRows:
        give(0, sum_rows(G));
        break;
      case OpKind::BroadcastCols:
        give(0, sum_cols(G));
        break;
      case OpKind::BroadcastScalar:
        give(0, sum(G));
        break;
      case OpKind::ConcatCols: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const std::size_t w = x(k).cols();
          if (needs(k)) give(k, slice_cols(G, off, off + w));
          off += w;
        }
        break;
      }
      case OpKind::SliceCols: {
        const std::size_t rows = G.rows();
        const std::size_t total = x(0).cols();
        std::vector<Var> parts;
        if (at.begin > 0) parts.push_back(constant(NumericArray::matrix(rows, at.begin)));
        parts.push_back(G);
        if (at.end < total) parts.push_back(constant(NumericArray::matrix(rows, total - at.end)));
        give(0, parts.size() == 1 ? G : concat_cols(parts));
        break;
      }
      case OpKind::Embedding:
        give(0, scatter_rows(G, at.ids, x(0).rows()));
        break;
      case OpKind::ScatterRows:
        give(0, embedding(G, at.ids));
        break;
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id());
    if (id < n && grads[id] >= 0) {
      out.emplace_back(this, grads[id]);
    } else {
      out.push_back(constant(NumericArray(w.value().shape())));
    }
  }
  return out;
}

}  // namespace metanlg::ad
