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

///
/// \file numkit.hpp
///
/// Dense row-major tensors of doubles with reverse-mode differentiation.
///
/// A Tensor is a cheap handle onto a shared node. Every op below is a free
/// function that computes its value eagerly and, when any input requires a
/// gradient, records a backward closure on the output node. backward() walks
/// the recorded nodes in reverse creation order, which is a valid reverse
/// topological order because an op's inputs always exist before it does.
///
#ifndef EEGPT_NUMKIT_HPP_
#define EEGPT_NUMKIT_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace eegpt::nk {

using Shape = std::vector<std::size_t>;
using Vector = Eigen::VectorXd;
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Stand-in for -inf in additive masks. Finite so that masked logits never
/// produce inf - inf; softmax treats any entry at or below half of it as
/// masked and writes an exact zero there.
inline constexpr double kMaskSentinel = -1e30;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  Vector value;
  Vector grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  void accumulate(const Vector& g);
  Vector& grad_buffer();
};

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Vector values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     bool requires_grad = false);
  static Tensor from_matrix(const Eigen::Ref<const Matrix>& m,
                            bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return static_cast<std::size_t>(node_->value.size()); }
  std::size_t dim(std::size_t axis) const;
  /// Matrix view: rows = product of all but the last extent, cols = last.
  std::size_t rows() const;
  std::size_t cols() const;

  const Vector& values() const { return node_->value; }
  ConstMatrixMap matrix() const;
  double item() const;
  double at(std::size_t flat) const { return node_->value[static_cast<Eigen::Index>(flat)]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Accumulated gradient, or zeros when nothing reached this tensor.
  Vector grad() const;
  void zero_grad() { node_->grad.resize(0); }

  /// In-place access for optimizers and finite-difference probes. Only valid
  /// on leaves.
  Vector& mutable_values();

  Tensor detach() const;
  bool is_leaf() const { return node_->is_leaf(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(Shape, Vector, const char*, std::vector<Tensor>,
                        std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

/// Builds an op result. The backward closure is kept only when some input
/// requires a gradient; it receives the output node (whose grad is filled).
Tensor make_op(Shape shape, Vector value, const char* op,
               std::vector<Tensor> inputs, std::function<void(Node&)> backward);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// The recorded portion of the graph that backward() walked.
struct ComputeTape {
  std::vector<const Node*> order;  // reverse creation order as visited
  std::size_t size() const { return order.size(); }
};

/// Reverse pass from a scalar loss. Gradients accumulate into every
/// requires-grad leaf reachable from the loss; intermediate gradients are
/// released afterwards so the same graph can be walked again.
ComputeTape backward(const Tensor& loss);

// -- linear algebra ----------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// -- elementwise ---------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a[r, :] + row for every matrix row r of a.
Tensor add_rowwise(const Tensor& a, const Tensor& row);
/// scale * a + shift
Tensor affine(const Tensor& a, double scale, double shift = 0.0);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);
Tensor silu(const Tensor& a);

// -- reductions ----------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column means of the matrix view, shape [1, cols].
Tensor mean_rows(const Tensor& a);

// -- normalisation and attention ----------------------------------------------
/// Softmax over the last extent. `additive_mask` has the same shape as x or
/// is a single row broadcast to every row; entries must be 0 or the sentinel.
/// A row with every entry masked is an error.
Tensor softmax_lastdim(const Tensor& x,
                       const std::optional<Tensor>& additive_mask = std::nullopt);
/// Row-wise x / sqrt(mean(x^2) + eps) * gain, gain of length cols.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);
/// out[i, j] = col[i] + row[j] for column vectors col [m, 1] and row [n, 1].
Tensor outer_sum(const Tensor& col, const Tensor& row);
/// Cosine similarity of matching rows, shape [rows, 1].
Tensor row_cosine(const Tensor& a, const Tensor& b);
/// Mean softmax cross-entropy over rows of `logits` against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// -- structure -------------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor block(const Tensor& a, std::size_t row, std::size_t nrows,
             std::size_t col, std::size_t ncols);
Tensor rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
/// Copy of `base` with src row k added onto row index[k].
Tensor index_add_rows(const Tensor& base, std::span<const std::size_t> index,
                      const Tensor& src);
/// Copy of `base` with row index[k] replaced by src row k.
Tensor index_put_rows(const Tensor& base, std::span<const std::size_t> index,
                      const Tensor& src);

}  // namespace eegpt::nk

#endif  // EEGPT_NUMKIT_HPP_
