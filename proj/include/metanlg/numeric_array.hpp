// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "metanlg/error.hpp"

namespace metanlg {

/// Dense row-major array of doubles. Tape operations use rank-2 arrays only;
/// scalars are 1x1.
class NumericArray {
 public:
  NumericArray() = default;

  explicit NumericArray(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  NumericArray(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("NumericArray: shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static NumericArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return NumericArray({rows, cols}, fill);
  }

  static NumericArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return NumericArray({rows, cols}, std::move(data));
  }

  static NumericArray scalar(double v) { return NumericArray({1, 1}, std::vector<double>{v}); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  bool is_scalar() const noexcept { return data_.size() == 1; }

  double item() const {
    if (!is_scalar()) throw ShapeError("item() on array of shape " + shape_string(shape_));
    return data_[0];
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const NumericArray& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const NumericArray&, const NumericArray&) = default;

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }

  static std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

 private:
  void require_matrix() const {
    if (shape_.size() != 2) throw ShapeError("expected rank-2 array, got " + shape_string(shape_));
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace metanlg
