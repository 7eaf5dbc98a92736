// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metanlg/autodiff/parameters.hpp"
#include "metanlg/error.hpp"

namespace metanlg::meta {

enum class OuterRule { Adam, Sgd };  // Sgd: plain theta -= beta * g, used by tests

struct MetaConfig {
  double alpha = 0.1;
  double beta = 0.001;
  std::size_t meta_batch = 5;
  std::size_t inner_steps = 1;
  bool second_order = true;
  double clip_norm = 0.5;  // 0 disables clipping
  std::size_t task_half_size = 200;
  std::size_t max_outer_steps = 1000;
  std::size_t convergence_window = 20;
  double convergence_tol = 1e-3;
  OuterRule outer = OuterRule::Adam;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value > 0");
    if (meta_batch < 1) throw ConfigError("meta batch size must be at least 1");
    if (inner_steps != 1) throw ConfigError("exactly one inner step is supported");
    if (clip_norm < 0.0) throw ConfigError("clip norm must be >= 0");
    if (task_half_size < 1) throw ConfigError("task half size must be at least 1");
  }
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::shared_ptr<const Layout> layout, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : m_(layout), v_(layout), b1_(b1), b2_(b2), eps_(eps) {}

  void apply(ParameterVector& params, const GradientVector& g, double lr) {
    // A default-constructed state adopts the layout of the first update.
    if (t_ == 0 && !(m_.layout() == params.layout())) *this = AdamState(params.layout_ptr(), b1_, b2_, eps_);
    params.require_same(g);
    params.require_same(m_);
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    auto p = params.values();
    auto gv = g.values();
    auto m = m_.values();
    auto v = v_.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * gv[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * gv[i] * gv[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }

  std::size_t step() const noexcept { return t_; }
  const GradientVector& first_moment() const noexcept { return m_; }
  const GradientVector& second_moment() const noexcept { return v_; }
  double beta1() const noexcept { return b1_; }
  double beta2() const noexcept { return b2_; }
  double epsilon() const noexcept { return eps_; }

  /// Restores a saved state (checkpoint loading).
  void restore(GradientVector m, GradientVector v, std::size_t t) {
    m.require_same(v);
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  GradientVector m_;
  GradientVector v_;
  std::size_t t_ = 0;
  double b1_ = 0.9;
  double b2_ = 0.999;
  double eps_ = 1e-8;
};

/// Rescales `g` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. max_norm == 0 leaves g untouched.
inline double clip_global_norm(GradientVector& g, double max_norm) {
  const double n = g.norm();
  if (max_norm > 0.0 && n > max_norm) g *= max_norm / n;
  return n;
}

/// Applies a (clipped) gradient with the configured outer rule.
inline void apply_update(ParameterVector& params, GradientVector g, double lr, double clip, OuterRule rule,
                         AdamState& adam) {
  if (!g.all_finite()) throw NonFiniteError("update: gradient is not finite");
  clip_global_norm(g, clip);
  if (rule == OuterRule::Sgd) {
    auto p = params.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * gv[i];
  } else {
    adam.apply(params, g, lr);
  }
  if (!params.all_finite()) throw NonFiniteError("update: parameters became non-finite");
}

/// One inner step theta - alpha * grad support(theta), as plain numbers.
inline ParameterVector inner_adapt(const ParameterVector& theta, const ad::LossBuilder& support, double alpha) {
  if (alpha < 0.0) throw ConfigError("inner_adapt: alpha must be >= 0");
  ad::Tape tape;
  ad::ParamVars p = ad::bind(tape, theta);
  ad::Var loss = support(tape, p);
  if (!loss.value().is_scalar()) throw ShapeError("inner_adapt: support loss is not scalar");
  GradientVector g = ad::grad(loss, p);
  if (!g.all_finite()) throw NonFiniteError("inner_adapt: gradient is not finite");
  ParameterVector out = theta;
  auto o = out.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= alpha * gv[i];
  return out;
}

struct TaskLosses {
  ad::LossBuilder support;
  ad::LossBuilder query;
};

struct MetaStepResult {
  double support_loss = 0.0;  // mean over tasks, at theta
  double query_loss = 0.0;    // mean over tasks, at the adapted parameters
  double grad_norm = 0.0;     // before clipping
};

/// Meta-gradient for the given tasks: the mean over tasks of
/// d/dtheta query_i(theta - alpha * grad support_i(theta)).
inline std::pair<GradientVector, MetaStepResult> meta_gradient(const ParameterVector& params,
                                                               const std::vector<TaskLosses>& tasks,
                                                               const MetaConfig& cfg) {
  if (tasks.empty()) throw ConfigError("meta_step: no tasks");
  GradientVector total(params.layout_ptr());
  MetaStepResult r;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    ad::UpdateGradient u;
    try {
      u = ad::grad_through_update(tasks[k].query, tasks[k].support, params, cfg.alpha, !cfg.second_order);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("meta_step: task " + std::to_string(k) + ": " + e.what());
    }
    total += u.gradient;
    r.support_loss += u.inner_loss;
    r.query_loss += u.outer_loss;
  }
  const double inv = 1.0 / static_cast<double>(tasks.size());
  total *= inv;
  r.support_loss *= inv;
  r.query_loss *= inv;
  r.grad_norm = total.norm();
  return {std::move(total), r};
}

inline MetaStepResult meta_step(ParameterVector& params, const std::vector<TaskLosses>& tasks, const MetaConfig& cfg,
                                AdamState& adam) {
  cfg.validate();
  auto [g, r] = meta_gradient(params, tasks, cfg);
  apply_update(params, std::move(g), cfg.beta, cfg.clip_norm, cfg.outer, adam);
  return r;
}

/// One optimizer step on a pooled batch loss. Returns the loss before the step.
inline double mtl_step(ParameterVector& params, const ad::LossBuilder& batch_loss, double lr, double clip,
                       AdamState& adam, OuterRule rule = OuterRule::Adam) {
  ad::Tape tape;
  ad::ParamVars p = ad::bind(tape, params);
  ad::Var loss = batch_loss(tape, p);
  if (!loss.value().is_scalar()) throw ShapeError("mtl_step: loss is not scalar");
  GradientVector g = ad::grad(loss, p);
  const double value = loss.value().item();
  apply_update(params, std::move(g), lr, clip, rule, adam);
  return value;
}

}  // namespace metanlg::meta
