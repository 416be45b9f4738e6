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

// Reverse-mode automatic differentiation over a static tape.
//
// A Graph records nodes in insertion order. Building a node only checks and
// records its shape; values are computed by forward(), which evaluates every
// pending node up to the requested root. Since a node's inputs always precede
// it, insertion order is a topological order, and backward() walks it in
// reverse. A graph is rebuilt for each training step.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyclevae/tensor.hpp"

namespace cyclevae {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Shape& shape() const;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kConcat,
  kSlice,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSum,
  kMean,
  kSquare,
  kAddBias,
  kMulBias,
  kDropout,
  kScale,
  kShiftRows,
};

std::string_view op_name(OpKind kind);

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf without gradient tracking (inputs, masks, noise).
  Var constant(Tensor value);
  /// Trainable leaf; backward() fills its gradient.
  Var parameter(Tensor value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// [m,k] x [k,n] -> [m,n]
  Var matmul(Var a, Var b);
  /// Rank-2 concatenation along axis 1 (features) or axis 0 (time).
  Var concat(std::span<const Var> parts, std::size_t axis = 1);
  /// Rank-2 slice [begin, end) along axis.
  Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var exp(Var x);
  Var log(Var x);
  /// Sum of all elements, rank-0 result.
  Var sum(Var x);
  Var mean(Var x);
  Var square(Var x);
  /// x[r,c] + bias[c]
  Var add_bias(Var x, Var bias);
  /// x[r,c] * scale[c]
  Var mul_bias(Var x, Var scale);
  /// x * mask where mask is a constant already scaled by 1/keep.
  Var dropout(Var x, Var mask);
  Var scale(Var x, double factor);
  /// out[t] = x[t + offset] with zero rows outside the sequence.
  Var shift_rows(Var x, std::ptrdiff_t offset);

  /// Evaluates all pending nodes up to root and returns its value.
  const Tensor& forward(Var root);

  /// Reverse sweep from a scalar root. Gradients of all nodes up to the root
  /// are reset first, so repeated calls yield identical results.
  void backward(Var root);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  const Shape& shape(Var v) const { return nodes_[v.id].shape; }
  OpKind kind(Var v) const { return nodes_[v.id].kind; }
  bool evaluated(Var v) const { return v.id < evaluated_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    Shape shape;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::vector<std::uint32_t> parts;  // concat inputs
    std::ptrdiff_t iarg0 = 0;
    std::ptrdiff_t iarg1 = 0;
    std::ptrdiff_t iarg2 = 0;
    double darg = 0.0;
    Tensor value;
    Tensor grad;
    bool reached = false;
    bool requires_grad = false;
  };

  static Node make_node(OpKind kind, Shape shape);
  Var push(Node node);
  const Node& node(Var v) const;
  void check_owned(Var v, std::string_view op) const;
  void evaluate(Node& n);
  void propagate(Node& n);
  Tensor& grad_of(std::uint32_t id);

  std::vector<Node> nodes_;
  std::uint32_t evaluated_ = 0;
  std::uint32_t backward_root_ = 0;
  bool has_backward_ = false;
};

// Infix helpers; both operands must belong to the same graph.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var matmul(Var a, Var b);
Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var square(Var x);
Var sum(Var x);

}  // namespace cyclevae
