// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metanlg/autodiff/tape.hpp"
#include "metanlg/error.hpp"
#include "metanlg/numeric_array.hpp"

namespace metanlg {

struct Segment {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Named matrix segments packed back to back into one flat buffer.
class Layout {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    if (find(name) != npos) throw Error("layout: duplicate segment '" + name + "'");
    segments_.push_back(Segment{std::move(name), rows, cols, total_});
    total_ += rows * cols;
    return segments_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < segments_.size(); ++i)
      if (segments_[i].name == name) return i;
    return npos;
  }

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const Segment& operator[](std::size_t i) const { return segments_.at(i); }
  std::size_t count() const noexcept { return segments_.size(); }
  std::size_t total() const noexcept { return total_; }

  friend bool operator==(const Layout&, const Layout&) = default;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

/// Flat buffer with a segment table. The tag keeps parameters and gradients
/// apart at compile time while sharing the layout machinery.
template <class Tag>
class FlatVector {
 public:
  FlatVector() : layout_(std::make_shared<const Layout>()) {}
  explicit FlatVector(std::shared_ptr<const Layout> layout)
      : layout_(std::move(layout)), values_(layout_->total(), 0.0) {}
  FlatVector(std::shared_ptr<const Layout> layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->total()) throw ShapeError("flat vector: value count does not match layout");
  }

  const Layout& layout() const noexcept { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const noexcept { return layout_; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> segment(std::size_t i) {
    const Segment& s = (*layout_)[i];
    return std::span<double>(values_).subspan(s.offset, s.size());
  }
  std::span<const double> segment(std::size_t i) const {
    const Segment& s = (*layout_)[i];
    return std::span<const double>(values_).subspan(s.offset, s.size());
  }

  NumericArray segment_array(std::size_t i) const {
    const Segment& s = (*layout_)[i];
    auto seg = segment(i);
    return NumericArray::matrix(s.rows, s.cols, std::vector<double>(seg.begin(), seg.end()));
  }

  void set_segment(std::size_t i, const NumericArray& a) {
    const Segment& s = (*layout_)[i];
    if (a.rank() != 2 || a.rows() != s.rows || a.cols() != s.cols) {
      throw ShapeError("segment '" + s.name + "' expects " + std::to_string(s.rows) + "x" +
                       std::to_string(s.cols) + ", got " + NumericArray::shape_string(a.shape()));
    }
    std::copy(a.values().begin(), a.values().end(), segment(i).begin());
  }

  bool same_layout(const FlatVector& other) const {
    return layout_ == other.layout_ || *layout_ == *other.layout_;
  }

  FlatVector& operator+=(const FlatVector& other) {
    require_same(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

  FlatVector& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }

  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const FlatVector& a, const FlatVector& b) {
    return a.same_layout(b) && a.values_ == b.values_;
  }

  void require_same(const FlatVector& other) const {
    if (!same_layout(other)) throw ShapeError("flat vectors have different segment tables");
  }

  template <class OtherTag>
  void require_same(const FlatVector<OtherTag>& other) const {
    if (!(layout() == other.layout())) throw ShapeError("flat vectors have different segment tables");
  }

 private:
  std::shared_ptr<const Layout> layout_;
  std::vector<double> values_;
};

struct ParameterTag {};
struct GradientTag {};
using ParameterVector = FlatVector<ParameterTag>;
using GradientVector = FlatVector<GradientTag>;

namespace ad {

/// A ParameterVector materialised on a tape, one node per segment. The nodes
/// are leaves for the original parameters and ordinary nodes for adapted ones.
struct ParamVars {
  std::shared_ptr<const Layout> layout;
  std::vector<Var> vars;

  Var operator[](std::size_t i) const { return vars.at(i); }
  Tape& tape() const { return vars.front().tape(); }
};

inline ParamVars bind(Tape& tape, const ParameterVector& params) {
  ParamVars out{params.layout_ptr(), {}};
  out.vars.reserve(params.layout().count());
  for (std::size_t i = 0; i < params.layout().count(); ++i) out.vars.push_back(tape.leaf(params.segment_array(i)));
  return out;
}

inline ParamVars bind_constant(Tape& tape, const ParameterVector& params) {
  ParamVars out{params.layout_ptr(), {}};
  out.vars.reserve(params.layout().count());
  for (std::size_t i = 0; i < params.layout().count(); ++i) out.vars.push_back(tape.constant(params.segment_array(i)));
  return out;
}

inline GradientVector to_gradient(const std::shared_ptr<const Layout>& layout, const std::vector<NumericArray>& parts) {
  GradientVector g(layout);
  for (std::size_t i = 0; i < parts.size(); ++i) g.set_segment(i, parts[i]);
  return g;
}

/// dloss/dparams. Segments that do not influence the loss get zeros.
inline GradientVector grad(Var loss, const ParamVars& params) {
  if (params.vars.empty()) return GradientVector(params.layout);
  if (&params.tape() != loss.tape_ptr()) throw Error("grad: parameters are bound to a different tape");
  return to_gradient(params.layout, loss.tape().gradient_values(loss, params.vars));
}

/// One plain gradient step theta - alpha * dloss/dtheta. With `differentiable`
/// the step stays on the tape so later losses differentiate through it;
/// otherwise the adapted values become fresh leaves.
inline ParamVars gradient_step(const ParamVars& theta, Var loss, double alpha, bool differentiable) {
  if (alpha < 0.0) throw Error("gradient_step: step size must be non-negative");
  Tape& tape = theta.tape();
  ParamVars out{theta.layout, {}};
  out.vars.reserve(theta.vars.size());
  if (differentiable) {
    std::vector<Var> g = tape.gradient(loss, theta.vars);
    for (std::size_t i = 0; i < g.size(); ++i) out.vars.push_back(theta.vars[i] - scale(g[i], alpha));
  } else {
    std::vector<NumericArray> g = tape.gradient_values(loss, theta.vars);
    for (std::size_t i = 0; i < g.size(); ++i) {
      NumericArray v = theta.vars[i].value();
      auto dst = v.values();
      auto src = g[i].values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= alpha * src[k];
      if (!v.all_finite()) throw NonFiniteError("gradient_step: adapted parameters are not finite");
      out.vars.push_back(tape.leaf(std::move(v)));
    }
  }
  return out;
}

using LossBuilder = std::function<Var(Tape&, const ParamVars&)>;

struct UpdateGradient {
  GradientVector gradient;
  double inner_loss = 0.0;
  double outer_loss = 0.0;  // evaluated at the adapted parameters
};

/// Gradient w.r.t. theta of outer(theta - alpha * grad inner(theta)).
///
/// The exact form carries the (I - alpha * H_inner) Jacobian of the inner step
/// and is obtained by differentiating through the recorded inner backward
/// pass. With `first_order` the Jacobian is replaced by the identity, i.e. the
/// result is grad outer evaluated at the adapted point.
inline UpdateGradient grad_through_update(const LossBuilder& outer, const LossBuilder& inner,
                                          const ParameterVector& theta, double alpha, bool first_order = false) {
  if (alpha < 0.0) throw Error("grad_through_update: alpha must be non-negative");
  Tape tape;
  ParamVars base = bind(tape, theta);
  Var inner_loss = inner(tape, base);
  if (!inner_loss.value().is_scalar()) throw ShapeError("grad_through_update: inner loss is not scalar");
  ParamVars adapted = gradient_step(base, inner_loss, alpha, !first_order);
  Var outer_loss = outer(tape, adapted);
  if (!outer_loss.value().is_scalar()) throw ShapeError("grad_through_update: outer loss is not scalar");

  const ParamVars& wrt = first_order ? adapted : base;
  UpdateGradient out{to_gradient(theta.layout_ptr(), tape.gradient_values(outer_loss, wrt.vars)),
                     inner_loss.value().item(), outer_loss.value().item()};
  if (!out.gradient.all_finite()) throw NonFiniteError("grad_through_update: gradient is not finite");
  return out;
}

}  // namespace ad
}  // namespace metanlg
