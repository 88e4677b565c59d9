// Copyright 2026 The Mango Authors. All Rights Reserved.
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

// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. Every tensor is 2-D; images are stored as (H*W) x C.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace mango {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward callback: receives the gradient of the op output and one slot per
// input. A slot is null when that input does not require a gradient.
using BackwardFn = std::function<void(const Mat& grad_out, const std::vector<Mat*>& grad_in)>;

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Mat value, bool requires_grad = false);

  static Tensor constant(const Mat& value) { return Tensor(value, false); }
  static Tensor parameter(Mat value) { return Tensor(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  // Leaf mutation (optimizer updates, checkpoint loads).
  Mat& mutable_value() { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && node_->grad.size() > 0; }
  // Gradient accumulated by backward(); zero matrix when never touched.
  Mat grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  // Seeds d(self)/d(self) = 1 for a 1x1 tensor, or `seed` for any shape.
  void backward() const;
  void backward(const Mat& seed) const;

  Tensor detach() const { return Tensor(node_->value, false); }
  double item() const { return node_->value(0, 0); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Gradient recording is enabled by default; the guard disables it for the
// current thread (sampling, evaluation).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds a graph node. Use for module-specific ops with hand-written adjoints.
Tensor make_op(Mat value, std::vector<Tensor> inputs, BackwardFn backward);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);  // broadcast 1 x C over rows
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);

// Row-wise.
Tensor softmax_rows(const Tensor& a, const BoolMat* mask = nullptr);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor normalize_rows(const Tensor& a, double eps = 1e-12);

// Structure.
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor gather_rows(const Tensor& a, const std::vector<Index>& rows);
Tensor reshape(const Tensor& a, Index rows, Index cols);
Tensor diff_rows(const Tensor& a);  // out[i] = a[i+1] - a[i]

// Reductions (all return 1x1).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor mean_abs_diff(const Tensor& a, const Tensor& b);

// Images stored as (H*W) x C, row-major pixels. Convolutions use 3x3 kernels
// with replicate padding so constant images stay constant.
Tensor conv3x3(const Tensor& x, int height, int width, const Tensor& weight, const Tensor& bias);
Tensor avg_pool2(const Tensor& x, int height, int width);
Tensor upsample2(const Tensor& x, int height, int width);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace ag
}  // namespace mango
