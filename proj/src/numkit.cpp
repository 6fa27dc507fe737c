// Copyright 2026 The EEGPT-desk Authors. All Rights Reserved.
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

#include "eegpt/numkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "eegpt/errors.hpp"

namespace eegpt::nk {

namespace {

using Index = Eigen::Index;

std::atomic<std::uint64_t> g_next_seq{1};

std::uint64_t next_seq() { return g_next_seq.fetch_add(1, std::memory_order_relaxed); }

void check_finite(const Vector& v, const char* op) {
  if (!v.allFinite()) {
    throw NumericError(std::string("non-finite value produced by '") + op + "'");
  }
}

MatrixMap as_matrix(Vector& v, std::size_t r, std::size_t c) {
  return MatrixMap(v.data(), static_cast<Index>(r), static_cast<Index>(c));
}

ConstMatrixMap as_matrix(const Vector& v, std::size_t r, std::size_t c) {
  return ConstMatrixMap(v.data(), static_cast<Index>(r), static_cast<Index>(c));
}

std::size_t view_rows(const Shape& s) {
  if (s.empty()) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t view_cols(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-d tensor, got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

Node& in(Node& out, std::size_t k) { return *out.inputs[k]; }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void Node::accumulate(const Vector& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Vector& Node::grad_buffer() {
  if (grad.size() == 0) grad = Vector::Zero(value.size());
  return grad;
}

// -- Tensor ----------------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, Vector::Zero(1)) {}

Tensor::Tensor(Shape shape, Vector values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != static_cast<std::size_t>(values.size())) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  check_finite(values, "leaf");
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->seq = next_seq();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = static_cast<Index>(shape_numel(shape));
  return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = static_cast<Index>(shape_numel(shape));
  return Tensor(std::move(shape), Vector::Constant(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Vector::Constant(1, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values,
                    bool requires_grad) {
  Vector v(static_cast<Index>(values.size()));
  std::copy(values.begin(), values.end(), v.data());
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Matrix>& m, bool requires_grad) {
  Vector v(m.size());
  as_matrix(v, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())) = m;
  return Tensor(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(v), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::rows() const { return view_rows(shape()); }
std::size_t Tensor::cols() const { return view_cols(shape()); }

ConstMatrixMap Tensor::matrix() const {
  return as_matrix(static_cast<const Vector&>(node_->value), rows(), cols());
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
}

Vector Tensor::grad() const {
  if (node_->grad.size() == 0) return Vector::Zero(node_->value.size());
  return node_->grad;
}

Vector& Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("mutable_values() on a non-leaf tensor");
  return node_->value;
}

Tensor Tensor::detach() const { return Tensor(shape(), values(), false); }

Tensor make_op(Shape shape, Vector value, const char* op, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->seq = next_seq();
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

ComputeTape backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  ComputeTape tape;
  if (!loss.requires_grad()) return tape;

  std::vector<Node*> nodes;
  std::unordered_set<const Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (auto& p : n->inputs) {
      if (p->requires_grad) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  Node& root = *loss.node();
  root.accumulate(Vector::Ones(1));
  for (Node* n : nodes) {
    if (n->is_leaf()) continue;
    tape.order.push_back(n);
    if (n->grad.size() != 0) n->backward(*n);
  }
  for (Node* n : nodes) {
    if (!n->is_leaf()) n->grad.resize(0);
  }
  return tape;
}

// -- linear algebra ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Vector out(static_cast<Index>(m * n));
  as_matrix(out, m, n).noalias() = a.matrix() * b.matrix();
  return make_op({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& o) {
    auto g = as_matrix(o.grad, m, n);
    Node& A = in(o, 0);
    Node& B = in(o, 1);
    if (A.requires_grad) {
      as_matrix(A.grad_buffer(), m, k).noalias() += g * as_matrix(B.value, k, n).transpose();
    }
    if (B.requires_grad) {
      as_matrix(B.grad_buffer(), k, n).noalias() += as_matrix(A.value, m, k).transpose() * g;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Vector out(static_cast<Index>(m * n));
  as_matrix(out, m, n).noalias() = a.matrix() * b.matrix().transpose();
  return make_op({m, n}, std::move(out), "matmul_nt", {a, b}, [m, k, n](Node& o) {
    auto g = as_matrix(o.grad, m, n);
    Node& A = in(o, 0);
    Node& B = in(o, 1);
    if (A.requires_grad) {
      as_matrix(A.grad_buffer(), m, k).noalias() += g * as_matrix(B.value, n, k);
    }
    if (B.requires_grad) {
      as_matrix(B.grad_buffer(), n, k).noalias() += g.transpose() * as_matrix(A.value, m, k);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Vector out(static_cast<Index>(m * n));
  as_matrix(out, n, m) = a.matrix().transpose();
  return make_op({n, m}, std::move(out), "transpose", {a}, [m, n](Node& o) {
    as_matrix(in(o, 0).grad_buffer(), m, n) += as_matrix(o.grad, n, m).transpose();
  });
}

// -- elementwise ---------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.shape(), a.values() + b.values(), "add", {a, b}, [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (in(o, k).requires_grad) in(o, k).accumulate(o.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.shape(), a.values() - b.values(), "sub", {a, b}, [](Node& o) {
    if (in(o, 0).requires_grad) in(o, 0).accumulate(o.grad);
    if (in(o, 1).requires_grad) in(o, 1).accumulate(-o.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.shape(), a.values().cwiseProduct(b.values()), "mul", {a, b},
                 [](Node& o) {
                   Node& A = in(o, 0);
                   Node& B = in(o, 1);
                   if (A.requires_grad) A.accumulate(o.grad.cwiseProduct(B.value));
                   if (B.requires_grad) B.accumulate(o.grad.cwiseProduct(A.value));
                 });
}

Tensor add_rowwise(const Tensor& a, const Tensor& row) {
  if (row.size() != a.cols()) {
    throw DimensionError("add_rowwise: row of " + std::to_string(row.size()) +
                         " values against " + shape_str(a.shape()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  Vector out = a.values();
  as_matrix(out, r, c).rowwise() += as_matrix(row.values(), 1, c).row(0);
  return make_op(a.shape(), std::move(out), "add_rowwise", {a, row}, [r, c](Node& o) {
    if (in(o, 0).requires_grad) in(o, 0).accumulate(o.grad);
    if (in(o, 1).requires_grad) {
      as_matrix(in(o, 1).grad_buffer(), 1, c) += as_matrix(o.grad, r, c).colwise().sum();
    }
  });
}

Tensor affine(const Tensor& a, double scale, double shift) {
  Vector out = (a.values() * scale).array() + shift;
  return make_op(a.shape(), std::move(out), "affine", {a},
                 [scale](Node& o) { in(o, 0).accumulate(o.grad * scale); });
}

Tensor square(const Tensor& a) {
  return make_op(a.shape(), a.values().array().square().matrix(), "square", {a},
                 [](Node& o) {
                   Node& A = in(o, 0);
                   A.accumulate(2.0 * o.grad.cwiseProduct(A.value));
                 });
}

Tensor abs(const Tensor& a) {
  return make_op(a.shape(), a.values().cwiseAbs(), "abs", {a}, [](Node& o) {
    Node& A = in(o, 0);
    A.accumulate(o.grad.cwiseProduct(A.value.unaryExpr([](double x) {
      return static_cast<double>((x > 0.0) - (x < 0.0));
    })));
  });
}

Tensor relu(const Tensor& a) {
  return make_op(a.shape(), a.values().cwiseMax(0.0), "relu", {a}, [](Node& o) {
    Node& A = in(o, 0);
    A.accumulate(o.grad.cwiseProduct(
        A.value.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; })));
  });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  Vector out = a.values().unaryExpr(
      [negative_slope](double x) { return x > 0.0 ? x : negative_slope * x; });
  return make_op(a.shape(), std::move(out), "leaky_relu", {a}, [negative_slope](Node& o) {
    Node& A = in(o, 0);
    A.accumulate(o.grad.cwiseProduct(A.value.unaryExpr(
        [negative_slope](double x) { return x > 0.0 ? 1.0 : negative_slope; })));
  });
}

Tensor silu(const Tensor& a) {
  Vector out = a.values().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return make_op(a.shape(), std::move(out), "silu", {a}, [](Node& o) {
    Node& A = in(o, 0);
    A.accumulate(o.grad.cwiseProduct(A.value.unaryExpr([](double x) {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    })));
  });
}

// -- reductions --------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  return make_op({}, Vector::Constant(1, a.values().sum()), "sum", {a}, [](Node& o) {
    Node& A = in(o, 0);
    A.accumulate(Vector::Constant(A.value.size(), o.grad[0]));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  return make_op({}, Vector::Constant(1, a.values().sum() / n), "mean", {a}, [n](Node& o) {
    Node& A = in(o, 0);
    A.accumulate(Vector::Constant(A.value.size(), o.grad[0] / n));
  });
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ContractError("mean_rows over zero rows");
  Vector out(static_cast<Index>(c));
  as_matrix(out, 1, c) = a.matrix().colwise().sum() / static_cast<double>(r);
  return make_op({1, c}, std::move(out), "mean_rows", {a}, [r, c](Node& o) {
    as_matrix(in(o, 0).grad_buffer(), r, c).rowwise() +=
        as_matrix(o.grad, 1, c).row(0) / static_cast<double>(r);
  });
}

// -- normalisation and attention -------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x, const std::optional<Tensor>& additive_mask) {
  const std::size_t r = x.rows(), c = x.cols();
  const Vector* mask = nullptr;
  bool broadcast = false;
  if (additive_mask) {
    if (additive_mask->shape() == x.shape()) {
      broadcast = false;
    } else if (additive_mask->size() == c) {
      broadcast = true;
    } else {
      throw DimensionError("softmax_lastdim: mask " + shape_str(additive_mask->shape()) +
                           " does not broadcast to " + shape_str(x.shape()));
    }
    mask = &additive_mask->values();
  }
  constexpr double kMaskedBelow = kMaskSentinel / 2;
  Vector out = Vector::Zero(static_cast<Index>(r * c));
  const auto xv = x.matrix();
  auto ov = as_matrix(out, r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    auto masked = [&](std::size_t j) {
      if (!mask) return false;
      const double m = (*mask)[static_cast<Index>(broadcast ? j : i * c + j)];
      return m <= kMaskedBelow;
    };
    auto logit = [&](std::size_t j) {
      double v = xv(static_cast<Index>(i), static_cast<Index>(j));
      if (mask) v += (*mask)[static_cast<Index>(broadcast ? j : i * c + j)];
      return v;
    };
    for (std::size_t j = 0; j < c; ++j) {
      if (masked(j)) continue;
      any = true;
      mx = std::max(mx, logit(j));
    }
    if (!any) {
      throw NumericError("softmax_lastdim: row " + std::to_string(i) +
                         " has every entry masked (degenerate softmax)");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (masked(j)) continue;
      const double e = std::exp(logit(j) - mx);
      ov(static_cast<Index>(i), static_cast<Index>(j)) = e;
      z += e;
    }
    ov.row(static_cast<Index>(i)) /= z;
  }
  std::vector<Tensor> inputs{x};
  return make_op(x.shape(), std::move(out), "softmax_lastdim", std::move(inputs),
                 [r, c](Node& o) {
                   const auto y = as_matrix(o.value, r, c);
                   const auto g = as_matrix(o.grad, r, c);
                   auto gx = as_matrix(in(o, 0).grad_buffer(), r, c);
                   for (Index i = 0; i < static_cast<Index>(r); ++i) {
                     const double dot = y.row(i).dot(g.row(i));
                     gx.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
                   }
                 });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c) {
    throw DimensionError("rms_norm: gain of " + std::to_string(gain.size()) +
                         " values against " + shape_str(x.shape()));
  }
  Vector inv(static_cast<Index>(r));
  Vector out(static_cast<Index>(r * c));
  const auto xv = x.matrix();
  const auto gv = as_matrix(gain.values(), 1, c);
  auto ov = as_matrix(out, r, c);
  for (Index i = 0; i < static_cast<Index>(r); ++i) {
    inv[i] = 1.0 / std::sqrt(xv.row(i).squaredNorm() / static_cast<double>(c) + eps);
    ov.row(i) = (xv.row(i) * inv[i]).cwiseProduct(gv.row(0));
  }
  return make_op(x.shape(), std::move(out), "rms_norm", {x, gain},
                 [r, c, inv = std::move(inv)](Node& o) {
                   Node& X = in(o, 0);
                   Node& G = in(o, 1);
                   const auto xv = as_matrix(X.value, r, c);
                   const auto gv = as_matrix(G.value, 1, c);
                   const auto g = as_matrix(o.grad, r, c);
                   const double n = static_cast<double>(c);
                   if (G.requires_grad) {
                     auto gg = as_matrix(G.grad_buffer(), 1, c);
                     for (Index i = 0; i < static_cast<Index>(r); ++i) {
                       gg.row(0) += g.row(i).cwiseProduct(xv.row(i)) * inv[i];
                     }
                   }
                   if (X.requires_grad) {
                     auto gx = as_matrix(X.grad_buffer(), r, c);
                     for (Index i = 0; i < static_cast<Index>(r); ++i) {
                       const Eigen::RowVectorXd gy = g.row(i).cwiseProduct(gv.row(0));
                       const double s = inv[i];
                       const double proj = gy.dot(xv.row(i));
                       gx.row(i) += s * gy - (s * s * s / n) * proj * xv.row(i);
                     }
                   }
                 });
}

Tensor outer_sum(const Tensor& col, const Tensor& row) {
  if (col.cols() != 1 || row.cols() != 1) {
    throw DimensionError("outer_sum: expects column vectors, got " + shape_str(col.shape()) +
                         " and " + shape_str(row.shape()));
  }
  const std::size_t m = col.rows(), n = row.rows();
  Vector out(static_cast<Index>(m * n));
  auto ov = as_matrix(out, m, n);
  ov.colwise() = col.values();
  ov.rowwise() += row.values().transpose();
  return make_op({m, n}, std::move(out), "outer_sum", {col, row}, [m, n](Node& o) {
    const auto g = as_matrix(o.grad, m, n);
    if (in(o, 0).requires_grad) in(o, 0).accumulate(g.rowwise().sum());
    if (in(o, 1).requires_grad) in(o, 1).accumulate(g.colwise().sum().transpose());
  });
}

Tensor row_cosine(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "row_cosine");
  const std::size_t r = a.rows(), c = a.cols();
  constexpr double kTiny = 1e-12;
  Vector na(static_cast<Index>(r)), nb(static_cast<Index>(r)), out(static_cast<Index>(r));
  const auto av = a.matrix();
  const auto bv = b.matrix();
  for (Index i = 0; i < static_cast<Index>(r); ++i) {
    na[i] = std::max(av.row(i).norm(), kTiny);
    nb[i] = std::max(bv.row(i).norm(), kTiny);
    out[i] = av.row(i).dot(bv.row(i)) / (na[i] * nb[i]);
  }
  return make_op({r, 1}, out, "row_cosine", {a, b},
                 [r, c, na = std::move(na), nb = std::move(nb), out](Node& o) {
                   Node& A = in(o, 0);
                   Node& B = in(o, 1);
                   const auto av = as_matrix(A.value, r, c);
                   const auto bv = as_matrix(B.value, r, c);
                   for (Index i = 0; i < static_cast<Index>(r); ++i) {
                     const double g = o.grad[i];
                     if (A.requires_grad) {
                       as_matrix(A.grad_buffer(), r, c).row(i) +=
                           g * (bv.row(i) / (na[i] * nb[i]) - out[i] * av.row(i) / (na[i] * na[i]));
                     }
                     if (B.requires_grad) {
                       as_matrix(B.grad_buffer(), r, c).row(i) +=
                           g * (av.row(i) / (na[i] * nb[i]) - out[i] * bv.row(i) / (nb[i] * nb[i]));
                     }
                   }
                 });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (labels.size() != r) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(r) + " rows");
  }
  if (r == 0) throw ContractError("cross_entropy over an empty batch");
  Matrix prob(static_cast<Index>(r), static_cast<Index>(c));
  const auto lv = logits.matrix();
  double total = 0.0;
  for (Index i = 0; i < static_cast<Index>(r); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(c) + ")");
    }
    const double mx = lv.row(i).maxCoeff();
    prob.row(i) = (lv.row(i).array() - mx).exp().matrix();
    const double z = prob.row(i).sum();
    prob.row(i) /= z;
    total += -(lv(i, y) - mx - std::log(z));
  }
  std::vector<int> y(labels.begin(), labels.end());
  return make_op({}, Vector::Constant(1, total / static_cast<double>(r)), "cross_entropy",
                 {logits}, [r, c, prob = std::move(prob), y = std::move(y)](Node& o) {
                   Matrix g = prob;
                   for (std::size_t i = 0; i < r; ++i) g(static_cast<Index>(i), y[i]) -= 1.0;
                   g *= o.grad[0] / static_cast<double>(r);
                   as_matrix(in(o, 0).grad_buffer(), r, c) += g;
                 });
}

// -- structure -------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_op(std::move(shape), a.values(), "reshape", {a},
                 [](Node& o) { in(o, 0).accumulate(o.grad); });
}

Tensor block(const Tensor& a, std::size_t row, std::size_t nrows, std::size_t col,
             std::size_t ncols) {
  const std::size_t r = a.rows(), c = a.cols();
  if (row + nrows > r || col + ncols > c) {
    throw DimensionError("block: [" + std::to_string(row) + "+" + std::to_string(nrows) +
                         ", " + std::to_string(col) + "+" + std::to_string(ncols) +
                         "] outside " + shape_str(a.shape()));
  }
  Vector out(static_cast<Index>(nrows * ncols));
  as_matrix(out, nrows, ncols) =
      a.matrix().block(static_cast<Index>(row), static_cast<Index>(col),
                       static_cast<Index>(nrows), static_cast<Index>(ncols));
  return make_op({nrows, ncols}, std::move(out), "block", {a},
                 [r, c, row, nrows, col, ncols](Node& o) {
                   as_matrix(in(o, 0).grad_buffer(), r, c)
                       .block(static_cast<Index>(row), static_cast<Index>(col),
                              static_cast<Index>(nrows), static_cast<Index>(ncols)) +=
                       as_matrix(o.grad, nrows, ncols);
                 });
}

Tensor rows(const Tensor& a, std::size_t begin, std::size_t count) {
  return block(a, begin, count, 0, a.cols());
}

Tensor cols(const Tensor& a, std::size_t begin, std::size_t count) {
  return block(a, 0, a.rows(), begin, count);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: width " + std::to_string(p.cols()) + " vs " +
                           std::to_string(c));
    }
    r += p.rows();
  }
  Vector out(static_cast<Index>(r * c));
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.segment(static_cast<Index>(at), static_cast<Index>(p.size())) = p.values();
    at += p.size();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op({r, c}, std::move(out), "concat_rows", std::move(inputs),
                 [offsets = std::move(offsets)](Node& o) {
                   for (std::size_t k = 0; k < o.inputs.size(); ++k) {
                     Node& p = *o.inputs[k];
                     if (!p.requires_grad) continue;
                     p.accumulate(o.grad.segment(static_cast<Index>(offsets[k]), p.value.size()));
                   }
                 });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: height " + std::to_string(p.rows()) + " vs " +
                           std::to_string(r));
    }
    c += p.cols();
  }
  Vector out(static_cast<Index>(r * c));
  auto ov = as_matrix(out, r, c);
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    ov.middleCols(static_cast<Index>(at), static_cast<Index>(p.cols())) = p.matrix();
    at += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op({r, c}, std::move(out), "concat_cols", std::move(inputs),
                 [r, c, offsets = std::move(offsets)](Node& o) {
                   const auto g = as_matrix(o.grad, r, c);
                   for (std::size_t k = 0; k < o.inputs.size(); ++k) {
                     Node& p = *o.inputs[k];
                     if (!p.requires_grad) continue;
                     const std::size_t pc = static_cast<std::size_t>(p.value.size()) / std::max<std::size_t>(r, 1);
                     as_matrix(p.grad_buffer(), r, pc) +=
                         g.middleCols(static_cast<Index>(offsets[k]), static_cast<Index>(pc));
                   }
                 });
}

namespace {

void check_index(std::span<const std::size_t> index, std::size_t limit, const char* op) {
  for (auto i : index) {
    if (i >= limit) {
      throw DimensionError(std::string(op) + ": row " + std::to_string(i) +
                           " out of range " + std::to_string(limit));
    }
  }
}

}  // namespace

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
  const std::size_t r = table.rows(), c = table.cols();
  check_index(index, r, "gather_rows");
  Vector out(static_cast<Index>(index.size() * c));
  auto ov = as_matrix(out, index.size(), c);
  const auto tv = table.matrix();
  for (std::size_t k = 0; k < index.size(); ++k) {
    ov.row(static_cast<Index>(k)) = tv.row(static_cast<Index>(index[k]));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op({index.size(), c}, std::move(out), "gather_rows", {table},
                 [r, c, idx = std::move(idx)](Node& o) {
                   auto gt = as_matrix(in(o, 0).grad_buffer(), r, c);
                   const auto g = as_matrix(o.grad, idx.size(), c);
                   for (std::size_t k = 0; k < idx.size(); ++k) {
                     gt.row(static_cast<Index>(idx[k])) += g.row(static_cast<Index>(k));
                   }
                 });
}

Tensor index_add_rows(const Tensor& base, std::span<const std::size_t> index,
                      const Tensor& src) {
  const std::size_t r = base.rows(), c = base.cols();
  if (src.rows() != index.size() || src.cols() != c) {
    throw DimensionError("index_add_rows: " + std::to_string(index.size()) +
                         " indices with source " + shape_str(src.shape()) + " into " +
                         shape_str(base.shape()));
  }
  check_index(index, r, "index_add_rows");
  Vector out = base.values();
  auto ov = as_matrix(out, r, c);
  const auto sv = src.matrix();
  for (std::size_t k = 0; k < index.size(); ++k) {
    ov.row(static_cast<Index>(index[k])) += sv.row(static_cast<Index>(k));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op(base.shape(), std::move(out), "index_add_rows", {base, src},
                 [r, c, idx = std::move(idx)](Node& o) {
                   if (in(o, 0).requires_grad) in(o, 0).accumulate(o.grad);
                   if (in(o, 1).requires_grad) {
                     auto gs = as_matrix(in(o, 1).grad_buffer(), idx.size(), c);
                     const auto g = as_matrix(o.grad, r, c);
                     for (std::size_t k = 0; k < idx.size(); ++k) {
                       gs.row(static_cast<Index>(k)) += g.row(static_cast<Index>(idx[k]));
                     }
                   }
                 });
}

Tensor index_put_rows(const Tensor& base, std::span<const std::size_t> index,
                      const Tensor& src) {
  const std::size_t r = base.rows(), c = base.cols();
  if (src.rows() != index.size() || src.cols() != c) {
    throw DimensionError("index_put_rows: " + std::to_string(index.size()) +
                         " indices with source " + shape_str(src.shape()) + " into " +
                         shape_str(base.shape()));
  }
  check_index(index, r, "index_put_rows");
  std::vector<std::size_t> idx(index.begin(), index.end());
  {
    auto sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ContractError("index_put_rows: duplicate row index");
    }
  }
  Vector out = base.values();
  auto ov = as_matrix(out, r, c);
  const auto sv = src.matrix();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    ov.row(static_cast<Index>(idx[k])) = sv.row(static_cast<Index>(k));
  }
  return make_op(base.shape(), std::move(out), "index_put_rows", {base, src},
                 [r, c, idx = std::move(idx)](Node& o) {
                   const auto g = as_matrix(o.grad, r, c);
                   if (in(o, 0).requires_grad) {
                     Vector gb = o.grad;
                     auto gbm = as_matrix(gb, r, c);
                     for (auto i : idx) gbm.row(static_cast<Index>(i)).setZero();
                     in(o, 0).accumulate(gb);
                   }
                   if (in(o, 1).requires_grad) {
                     auto gs = as_matrix(in(o, 1).grad_buffer(), idx.size(), c);
                     for (std::size_t k = 0; k < idx.size(); ++k) {
                       gs.row(static_cast<Index>(k)) += g.row(static_cast<Index>(idx[k]));
                     }
                   }
                 });
}

}  // namespace eegpt::nk
