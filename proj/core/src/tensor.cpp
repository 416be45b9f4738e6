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

#include "cyclevae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cyclevae/error.hpp"

namespace cyclevae {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw ShapeError("rank " + std::to_string(dims.size()) + " exceeds maximum of 4");
  }
  rank_ = dims.size();
  for (std::size_t i = 0; i < rank_; ++i) {
    if (dims[i] == 0) throw ShapeError("zero-sized dimension in shape");
    dims_[i] = dims[i];
  }
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

void Shape::throw_not_matrix() const {
  throw ShapeError("matrix view of rank-" + std::to_string(rank_) + " shape " + str());
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) out << ',';
    out << dims_[i];
  }
  out << ']';
  return out.str();
}

bool operator==(const Shape& a, const Shape& b) {
  if (a.rank_ != b.rank_) return false;
  for (std::size_t i = 0; i < a.rank_; ++i)
    if (a.dims_[i] != b.dims_[i]) return false;
  return true;
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape{rows, cols}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor Tensor::row_range(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin >= end || end > rows()) {
    throw ShapeError("row_range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_.str());
  }
  const std::size_t c = cols();
  return Tensor(Shape{end - begin, c},
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::col_range(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin >= end || end > cols()) {
    throw ShapeError("col_range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_.str());
  }
  Tensor out(Shape{rows(), end - begin});
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = (*this)(r, c);
  return out;
}

Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw ShapeError("hconcat: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(Shape{a.rows(), a.cols() + b.cols()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cyclevae
