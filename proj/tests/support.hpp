// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles. Nothing here calls the backward pass.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "metanlg/autodiff/parameters.hpp"
#include "metanlg/random.hpp"

namespace testing_support {

using metanlg::GradientVector;
using metanlg::ParameterVector;

/// Central differences of a scalar function of the flat parameter buffer.
inline std::vector<double> central_difference(const std::function<double(const ParameterVector&)>& f,
                                              const ParameterVector& theta, double h = 1e-5) {
  std::vector<double> out(theta.size());
  ParameterVector probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = theta.values()[i];
    probe.values()[i] = x + h;
    const double up = f(probe);
    probe.values()[i] = x - h;
    const double down = f(probe);
    probe.values()[i] = x;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

struct Agreement {
  bool ok = true;
  double worst_relative = 0.0;  // over elements outside the absolute floor
  double worst_absolute = 0.0;
};

/// Element-wise: |a-b| <= abs_tol, or |a-b| / max(|a|,|b|) <= rel_tol.
inline Agreement compare(std::span<const double> analytic, std::span<const double> oracle, double rel_tol = 1e-4,
                         double abs_tol = 1e-7) {
  Agreement r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = std::abs(analytic[i] - oracle[i]);
    r.worst_absolute = std::max(r.worst_absolute, d);
    if (d <= abs_tol) continue;
    const double rel = d / std::max(std::abs(analytic[i]), std::abs(oracle[i]));
    r.worst_relative = std::max(r.worst_relative, rel);
    if (rel > rel_tol) r.ok = false;
  }
  return r;
}

inline metanlg::NumericArray random_matrix(metanlg::Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                                           double hi = 1.0) {
  metanlg::NumericArray a = metanlg::NumericArray::matrix(rows, cols);
  for (double& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

inline void fill_uniform(ParameterVector& p, metanlg::Rng& rng, double lo, double hi) {
  for (double& v : p.values()) v = rng.uniform(lo, hi);
}

}  // namespace testing_support
