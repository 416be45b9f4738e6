// Copyright 2026 The cyclevae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cyclevae {

/// Tensor dimensions, up to rank 4. Rank 0 is a scalar.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;

  /// Matrix view: rank 0 is 1x1, rank 1 is a 1xn row, rank 2 is itself.
  std::size_t rows() const {
    if (rank_ == 2) return dims_[0];
    if (rank_ > 2) throw_not_matrix();
    return 1;
  }
  std::size_t cols() const {
    if (rank_ == 2) return dims_[1];
    if (rank_ == 1) return dims_[0];
    if (rank_ > 2) throw_not_matrix();
    return 1;
  }

  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b);

 private:
  [[noreturn]] void throw_not_matrix() const;

  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

/// Dense row-major 64-bit tensor.
class Tensor {
 public:
  /// Scalar zero.
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.rows(); }
  std::size_t cols() const { return shape_.cols(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  /// Scalar value of a one-element tensor.
  double item() const;

  void fill(double v);
  bool all_finite() const;

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Rows [begin, end) of a rank-2 tensor.
  Tensor row_range(std::size_t begin, std::size_t end) const;
  /// Columns [begin, end) of a rank-2 tensor.
  Tensor col_range(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Row-wise concatenation of rank-2 tensors with equal row counts.
Tensor hconcat(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace cyclevae
