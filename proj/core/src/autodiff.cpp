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

#include "cyclevae/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "cyclevae/error.hpp"

namespace cyclevae {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

// Single-row operands take the matrix-vector path; the recurrent step is a
// sequence of such products.
using ConstRow = Eigen::Map<const Eigen::RowVectorXd>;
using MutRow = Eigen::Map<Eigen::RowVectorXd>;

ConstRow as_row(const Tensor& t) { return ConstRow(t.raw(), static_cast<Eigen::Index>(t.size())); }
MutRow as_row(Tensor& t) { return MutRow(t.raw(), static_cast<Eigen::Index>(t.size())); }

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + a.str() + " and " +
                   b.str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "subtract";
    case OpKind::kMul: return "multiply";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquare: return "square";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kMulBias: return "mul_bias";
    case OpKind::kDropout: return "dropout";
    case OpKind::kScale: return "scale";
    case OpKind::kShiftRows: return "shift_rows";
  }
  return "unknown";
}

const Shape& Var::shape() const { return graph->shape(*this); }

Var Graph::push(Node node) {
  if (nodes_.size() >= UINT32_MAX) throw ConfigError("graph node limit exceeded");
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(Var v) const { return nodes_[v.id]; }

void Graph::check_owned(Var v, std::string_view op) const {
  if (v.graph != this || v.id >= nodes_.size()) {
    throw ConfigError(std::string(op) + ": variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor value) {
  Node n = make_node(OpKind::kConstant, value.shape());
  n.value = std::move(value);
  const bool leaf_ready = evaluated_ == nodes_.size();
  Var v = push(std::move(n));
  if (leaf_ready) evaluated_ = v.id + 1;
  return v;
}

Var Graph::parameter(Tensor value) {
  Node n = make_node(OpKind::kParameter, value.shape());
  n.value = std::move(value);
  n.requires_grad = true;
  const bool leaf_ready = evaluated_ == nodes_.size();
  Var v = push(std::move(n));
  if (leaf_ready) evaluated_ = v.id + 1;
  return v;
}

Graph::Node Graph::make_node(OpKind kind, Shape shape) {
  Node n;
  n.kind = kind;
  n.shape = shape;
  return n;
}

Var Graph::add(Var a, Var b) {
  check_owned(a, "add");
  check_owned(b, "add");
  if (!(shape(a) == shape(b))) shape_error(OpKind::kAdd, shape(a), shape(b));
  Node n = make_node(OpKind::kAdd, shape(a));
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  check_owned(a, "subtract");
  check_owned(b, "subtract");
  if (!(shape(a) == shape(b))) shape_error(OpKind::kSub, shape(a), shape(b));
  Node n = make_node(OpKind::kSub, shape(a));
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  check_owned(a, "multiply");
  check_owned(b, "multiply");
  if (!(shape(a) == shape(b))) shape_error(OpKind::kMul, shape(a), shape(b));
  Node n = make_node(OpKind::kMul, shape(a));
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (sa.rank() != 2 || sb.rank() != 2 || sa[1] != sb[0]) shape_error(OpKind::kMatmul, sa, sb);
  Node n = make_node(OpKind::kMatmul, Shape{sa[0], sb[1]});
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Var Graph::concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  const Shape& first = shape(parts[0]);
  std::size_t total = 0;
  Node n = make_node(OpKind::kConcat, first);
  for (Var p : parts) {
    check_owned(p, "concat");
    const Shape& s = shape(p);
    if (s.rank() != 2 || first.rank() != 2 || s[1 - axis] != first[1 - axis]) {
      shape_error(OpKind::kConcat, first, s);
    }
    total += s[axis];
    n.parts.push_back(p.id);
    n.requires_grad = n.requires_grad || node(p).requires_grad;
  }
  n.iarg0 = static_cast<std::ptrdiff_t>(axis);
  n.shape = axis == 1 ? Shape{first[0], total} : Shape{total, first[1]};
  return push(std::move(n));
}

Var Graph::slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_owned(x, "slice");
  const Shape& s = shape(x);
  if (s.rank() != 2 || axis > 1 || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of shape " + s.str());
  }
  Node n = make_node(OpKind::kSlice,
                     axis == 0 ? Shape{end - begin, s[1]} : Shape{s[0], end - begin});
  n.a = x.id;
  n.iarg0 = static_cast<std::ptrdiff_t>(axis);
  n.iarg1 = static_cast<std::ptrdiff_t>(begin);
  n.iarg2 = static_cast<std::ptrdiff_t>(end);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

#define CYCLEVAE_UNARY(method, tag)                    \
  Var Graph::method(Var x) {                           \
    check_owned(x, op_name(tag));                      \
    Node n = make_node(tag, shape(x));                 \
    n.a = x.id;                                        \
    n.requires_grad = node(x).requires_grad;           \
    return push(std::move(n));                         \
  }

CYCLEVAE_UNARY(tanh, OpKind::kTanh)
CYCLEVAE_UNARY(sigmoid, OpKind::kSigmoid)
CYCLEVAE_UNARY(exp, OpKind::kExp)
CYCLEVAE_UNARY(log, OpKind::kLog)
CYCLEVAE_UNARY(square, OpKind::kSquare)

#undef CYCLEVAE_UNARY

Var Graph::sum(Var x) {
  check_owned(x, "sum");
  Node n = make_node(OpKind::kSum, Shape{});
  n.a = x.id;
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::mean(Var x) {
  check_owned(x, "mean");
  Node n = make_node(OpKind::kMean, Shape{});
  n.a = x.id;
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::add_bias(Var x, Var bias) {
  check_owned(x, "add_bias");
  check_owned(bias, "add_bias");
  const Shape& sx = shape(x);
  const Shape& sb = shape(bias);
  if (sx.rank() != 2 || sb.rank() > 2 || sb.numel() != sx[1] || sb.rows() != 1) {
    shape_error(OpKind::kAddBias, sx, sb);
  }
  Node n = make_node(OpKind::kAddBias, sx);
  n.a = x.id;
  n.b = bias.id;
  n.requires_grad = node(x).requires_grad || node(bias).requires_grad;
  return push(std::move(n));
}

Var Graph::mul_bias(Var x, Var scale) {
  check_owned(x, "mul_bias");
  check_owned(scale, "mul_bias");
  const Shape& sx = shape(x);
  const Shape& ss = shape(scale);
  if (sx.rank() != 2 || ss.rank() > 2 || ss.numel() != sx[1] || ss.rows() != 1) {
    shape_error(OpKind::kMulBias, sx, ss);
  }
  Node n = make_node(OpKind::kMulBias, sx);
  n.a = x.id;
  n.b = scale.id;
  n.requires_grad = node(x).requires_grad || node(scale).requires_grad;
  return push(std::move(n));
}

Var Graph::dropout(Var x, Var mask) {
  check_owned(x, "dropout");
  check_owned(mask, "dropout");
  if (!(shape(x) == shape(mask))) shape_error(OpKind::kDropout, shape(x), shape(mask));
  if (node(mask).requires_grad) throw ConfigError("dropout: mask must be a constant");
  Node n = make_node(OpKind::kDropout, shape(x));
  n.a = x.id;
  n.b = mask.id;
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::scale(Var x, double factor) {
  check_owned(x, "scale");
  Node n = make_node(OpKind::kScale, shape(x));
  n.a = x.id;
  n.darg = factor;
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::shift_rows(Var x, std::ptrdiff_t offset) {
  check_owned(x, "shift_rows");
  if (shape(x).rank() != 2) throw ShapeError("shift_rows: rank-2 input required, got " + shape(x).str());
  Node n = make_node(OpKind::kShiftRows, shape(x));
  n.a = x.id;
  n.iarg0 = offset;
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

const Tensor& Graph::forward(Var root) {
  check_owned(root, "forward");
  for (; evaluated_ <= root.id; ++evaluated_) evaluate(nodes_[evaluated_]);
  return nodes_[root.id].value;
}

void Graph::evaluate(Node& n) {
  switch (n.kind) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      return;
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDropout: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      n.value = Tensor(n.shape);
      double* out = n.value.raw();
      const std::size_t size = a.size();
      if (n.kind == OpKind::kAdd) {
        for (std::size_t i = 0; i < size; ++i) out[i] = a[i] + b[i];
      } else if (n.kind == OpKind::kSub) {
        for (std::size_t i = 0; i < size; ++i) out[i] = a[i] - b[i];
      } else {
        for (std::size_t i = 0; i < size; ++i) out[i] = a[i] * b[i];
      }
      return;
    }
    case OpKind::kMatmul: {
      n.value = Tensor(n.shape);
      const Tensor& a = nodes_[n.a].value;
      if (a.rows() == 1) {
        as_row(n.value).noalias() = as_row(a) * as_matrix(nodes_[n.b].value);
      } else {
        as_matrix(n.value).noalias() = as_matrix(a) * as_matrix(nodes_[n.b].value);
      }
      return;
    }
    case OpKind::kConcat: {
      n.value = Tensor(n.shape);
      if (n.iarg0 == 1) {
        std::size_t offset = 0;
        for (std::uint32_t p : n.parts) {
          const Tensor& part = nodes_[p].value;
          for (std::size_t r = 0; r < part.rows(); ++r) {
            std::copy(part.row(r).begin(), part.row(r).end(),
                      n.value.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
          }
          offset += part.cols();
        }
      } else {
        double* out = n.value.raw();
        for (std::uint32_t p : n.parts) {
          const Tensor& part = nodes_[p].value;
          out = std::copy(part.data().begin(), part.data().end(), out);
        }
      }
      return;
    }
    case OpKind::kSlice: {
      const Tensor& x = nodes_[n.a].value;
      const auto begin = static_cast<std::size_t>(n.iarg1);
      const auto end = static_cast<std::size_t>(n.iarg2);
      n.value = n.iarg0 == 0 ? x.row_range(begin, end) : x.col_range(begin, end);
      return;
    }
    case OpKind::kTanh:
    case OpKind::kSigmoid:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSquare:
    case OpKind::kScale: {
      const Tensor& x = nodes_[n.a].value;
      n.value = Tensor(n.shape);
      double* out = n.value.raw();
      const double* in = x.raw();
      const std::size_t size = x.size();
      switch (n.kind) {
        case OpKind::kTanh:
          for (std::size_t i = 0; i < size; ++i) out[i] = std::tanh(in[i]);
          break;
        case OpKind::kSigmoid:
          for (std::size_t i = 0; i < size; ++i) out[i] = stable_sigmoid(in[i]);
          break;
        case OpKind::kExp:
          for (std::size_t i = 0; i < size; ++i) out[i] = std::exp(in[i]);
          break;
        case OpKind::kLog:
          for (std::size_t i = 0; i < size; ++i) out[i] = std::log(in[i]);
          break;
        case OpKind::kSquare:
          for (std::size_t i = 0; i < size; ++i) out[i] = in[i] * in[i];
          break;
        default:
          for (std::size_t i = 0; i < size; ++i) out[i] = in[i] * n.darg;
          break;
      }
      return;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      const Tensor& x = nodes_[n.a].value;
      // Neumaier-compensated sum
      double total = 0.0;
      double carry = 0.0;
      for (double v : x.data()) {
        const double t = total + v;
        carry += std::abs(total) >= std::abs(v) ? (total - t) + v : (v - t) + total;
        total = t;
      }
      total += carry;
      if (n.kind == OpKind::kMean) total /= static_cast<double>(x.size());
      n.value = Tensor::scalar(total);
      return;
    }
    case OpKind::kAddBias:
    case OpKind::kMulBias: {
      const Tensor& x = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      n.value = Tensor(n.shape);
      const std::size_t cols = x.cols();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* in = x.raw() + r * cols;
        double* out = n.value.raw() + r * cols;
        if (n.kind == OpKind::kAddBias) {
          for (std::size_t c = 0; c < cols; ++c) out[c] = in[c] + b[c];
        } else {
          for (std::size_t c = 0; c < cols; ++c) out[c] = in[c] * b[c];
        }
      }
      return;
    }
    case OpKind::kShiftRows: {
      const Tensor& x = nodes_[n.a].value;
      n.value = Tensor(n.shape);
      const auto rows = static_cast<std::ptrdiff_t>(x.rows());
      for (std::ptrdiff_t t = 0; t < rows; ++t) {
        const std::ptrdiff_t src = t + n.iarg0;
        if (src < 0 || src >= rows) continue;
        std::copy(x.row(static_cast<std::size_t>(src)).begin(),
                  x.row(static_cast<std::size_t>(src)).end(),
                  n.value.row(static_cast<std::size_t>(t)).begin());
      }
      return;
    }
  }
}

Tensor& Graph::grad_of(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.reached) {
    if (n.grad.shape() == n.shape) {
      n.grad.fill(0.0);
    } else {
      n.grad = Tensor(n.shape);
    }
    n.reached = true;
  }
  return n.grad;
}

void Graph::backward(Var root) {
  check_owned(root, "backward");
  if (!evaluated(root)) throw ConfigError("backward: forward() has not evaluated the root");
  if (nodes_[root.id].shape.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + nodes_[root.id].shape.str());
  }
  for (std::uint32_t i = 0; i <= root.id; ++i) nodes_[i].reached = false;
  grad_of(root.id).fill(1.0);
  for (std::uint32_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.reached && n.requires_grad) propagate(n);
  }
  for (std::uint32_t i = 0; i <= root.id; ++i) {
    if (!nodes_[i].reached) grad_of(i);
  }
  backward_root_ = root.id;
  has_backward_ = true;
}

void Graph::propagate(Node& n) {
  // Copy the gradient handle target lazily: grad_of may touch other nodes but
  // never n itself, and nodes_ is not resized during backward.
  const Tensor& g = n.grad;
  auto wants = [this](std::uint32_t id) { return nodes_[id].requires_grad; };
  switch (n.kind) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      return;
    case OpKind::kAdd:
    case OpKind::kSub: {
      if (wants(n.a)) {
        Tensor& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(n.b)) {
        Tensor& gb = grad_of(n.b);
        if (n.kind == OpKind::kAdd) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      }
      return;
    }
    case OpKind::kMul:
    case OpKind::kDropout: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      if (wants(n.a)) {
        Tensor& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (n.kind == OpKind::kMul && wants(n.b)) {
        Tensor& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      return;
    }
    case OpKind::kMatmul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const bool single_row = a.rows() == 1;
      if (wants(n.a)) {
        Tensor& ga = grad_of(n.a);
        if (single_row) {
          as_row(ga).noalias() += as_row(g) * as_matrix(b).transpose();
        } else {
          as_matrix(ga).noalias() += as_matrix(g) * as_matrix(b).transpose();
        }
      }
      if (wants(n.b)) {
        Tensor& gb = grad_of(n.b);
        if (single_row) {
          as_matrix(gb).noalias() += as_row(a).transpose() * as_row(g);
        } else {
          as_matrix(gb).noalias() += as_matrix(a).transpose() * as_matrix(g);
        }
      }
      return;
    }
    case OpKind::kConcat: {
      std::size_t offset = 0;
      for (std::uint32_t p : n.parts) {
        const Shape& ps = nodes_[p].shape;
        if (wants(p)) {
          Tensor& gp = grad_of(p);
          if (n.iarg0 == 1) {
            for (std::size_t r = 0; r < ps[0]; ++r)
              for (std::size_t c = 0; c < ps[1]; ++c) gp(r, c) += g(r, offset + c);
          } else {
            const double* src = g.raw() + offset * ps[1];
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
          }
        }
        offset += ps[static_cast<std::size_t>(n.iarg0)];
      }
      return;
    }
    case OpKind::kSlice: {
      Tensor& gx = grad_of(n.a);
      const auto begin = static_cast<std::size_t>(n.iarg1);
      if (n.iarg0 == 0) {
        double* dst = gx.raw() + begin * gx.cols();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      } else {
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
      }
      return;
    }
    case OpKind::kTanh: {
      Tensor& gx = grad_of(n.a);
      const Tensor& y = n.value;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case OpKind::kSigmoid: {
      Tensor& gx = grad_of(n.a);
      const Tensor& y = n.value;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case OpKind::kExp: {
      Tensor& gx = grad_of(n.a);
      const Tensor& y = n.value;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
      return;
    }
    case OpKind::kLog: {
      Tensor& gx = grad_of(n.a);
      const Tensor& x = nodes_[n.a].value;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x[i];
      return;
    }
    case OpKind::kSquare: {
      Tensor& gx = grad_of(n.a);
      const Tensor& x = nodes_[n.a].value;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * x[i] * g[i];
      return;
    }
    case OpKind::kScale: {
      Tensor& gx = grad_of(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.darg;
      return;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      Tensor& gx = grad_of(n.a);
      double gs = g[0];
      if (n.kind == OpKind::kMean) gs /= static_cast<double>(gx.size());
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gs;
      return;
    }
    case OpKind::kAddBias: {
      const std::size_t cols = g.cols();
      if (wants(n.a)) {
        Tensor& gx = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (wants(n.b)) {
        Tensor& gb = grad_of(n.b);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
      return;
    }
    case OpKind::kMulBias: {
      const std::size_t cols = g.cols();
      const Tensor& x = nodes_[n.a].value;
      const Tensor& s = nodes_[n.b].value;
      if (wants(n.a)) {
        Tensor& gx = grad_of(n.a);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * s[c];
      }
      if (wants(n.b)) {
        Tensor& gs = grad_of(n.b);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gs[c] += g[r * cols + c] * x[r * cols + c];
      }
      return;
    }
    case OpKind::kShiftRows: {
      Tensor& gx = grad_of(n.a);
      const auto rows = static_cast<std::ptrdiff_t>(g.rows());
      const std::size_t cols = g.cols();
      for (std::ptrdiff_t t = 0; t < rows; ++t) {
        const std::ptrdiff_t src = t + n.iarg0;
        if (src < 0 || src >= rows) continue;
        for (std::size_t c = 0; c < cols; ++c)
          gx(static_cast<std::size_t>(src), c) += g(static_cast<std::size_t>(t), c);
      }
      return;
    }
  }
}

const Tensor& Graph::value(Var v) const {
  check_owned(v, "value");
  if (!evaluated(v)) throw ConfigError("value: node has not been evaluated by forward()");
  return nodes_[v.id].value;
}

const Tensor& Graph::grad(Var v) const {
  check_owned(v, "grad");
  if (!has_backward_ || v.id > backward_root_) {
    throw ConfigError("grad: no backward pass covers this node");
  }
  return nodes_[v.id].grad;
}

Var operator+(Var a, Var b) { return a.graph->add(a, b); }
Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
Var operator*(Var a, Var b) { return a.graph->mul(a, b); }
Var matmul(Var a, Var b) { return a.graph->matmul(a, b); }
Var tanh(Var x) { return x.graph->tanh(x); }
Var sigmoid(Var x) { return x.graph->sigmoid(x); }
Var exp(Var x) { return x.graph->exp(x); }
Var square(Var x) { return x.graph->square(x); }
Var sum(Var x) { return x.graph->sum(x); }

}  // namespace cyclevae
