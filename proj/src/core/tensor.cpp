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

#include "mango/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "mango/core/errors.hpp"

namespace mango::ag {
namespace {

thread_local bool g_grad_enabled = true;

void ensure_grad(Node& n) {
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
  }
}

// im2col for a 3x3 replicate-padded convolution. Column layout is
// ((ky * 3 + kx) * C + c).
Mat im2col3(const Mat& x, int h, int w) {
  const Index c = x.cols();
  Mat col(static_cast<Index>(h) * w, 9 * c);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const Index row = static_cast<Index>(y) * w + xx;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = std::clamp(y + ky - 1, 0, h - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = std::clamp(xx + kx - 1, 0, w - 1);
          col.block(row, (ky * 3 + kx) * c, 1, c) = x.row(static_cast<Index>(sy) * w + sx);
        }
      }
    }
  }
  return col;
}

void col2im3_add(const Mat& dcol, int h, int w, Index c, Mat& dx) {
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const Index row = static_cast<Index>(y) * w + xx;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = std::clamp(y + ky - 1, 0, h - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = std::clamp(xx + kx - 1, 0, w - 1);
          dx.row(static_cast<Index>(sy) * w + sx) += dcol.block(row, (ky * 3 + kx) * c, 1, c);
        }
      }
    }
  }
}

}  // namespace

Tensor::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Mat Tensor::grad() const {
  if (node_->grad.size() == 0) return Mat::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw ArgumentError("backward(): non-scalar tensor needs a seed");
  backward(Mat::Ones(1, 1));
}

void Tensor::backward(const Mat& seed) const {
  if (!requires_grad()) return;
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  ensure_grad(*node_);
  node_->grad += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.size() == 0) continue;
    std::vector<Mat*> slots(n->inputs.size(), nullptr);
    for (size_t i = 0; i < n->inputs.size(); ++i) {
      Node* in = n->inputs[i].get();
      if (in->requires_grad) {
        ensure_grad(*in);
        slots[i] = &in->grad;
      }
    }
    n->backward(n->grad, slots);
    // Interior gradients are not needed after propagation.
    if (!n->inputs.empty()) n->grad.resize(0, 0);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op(Mat value, std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  const auto& node = out.node();
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.node());
  node->backward = std::move(backward);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimension mismatch");
  Mat v = a.value() * b.value();
  NodePtr an = a.node(), bn = b.node();
  return make_op(std::move(v), {a, b}, [an, bn](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->noalias() += g * bn->value.transpose();
    if (gi[1]) gi[1]->noalias() += an->value.transpose() * g;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ArgumentError("matmul_nt: inner dimension mismatch");
  Mat v = a.value() * b.value().transpose();
  NodePtr an = a.node(), bn = b.node();
  return make_op(std::move(v), {a, b}, [an, bn](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->noalias() += g * bn->value;
    if (gi[1]) gi[1]->noalias() += g.transpose() * an->value;
  });
}

Tensor transpose(const Tensor& a) {
  Mat v = a.value().transpose();
  return make_op(std::move(v), {a}, [](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g.transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Mat v = a.value() + b.value();
  return make_op(std::move(v), {a, b}, [](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g;
    if (gi[1]) *gi[1] += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Mat v = a.value() - b.value();
  return make_op(std::move(v), {a, b}, [](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g;
    if (gi[1]) *gi[1] -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Mat v = a.value().cwiseProduct(b.value());
  NodePtr an = a.node(), bn = b.node();
  return make_op(std::move(v), {a, b}, [an, bn](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g.cwiseProduct(bn->value);
    if (gi[1]) *gi[1] += g.cwiseProduct(an->value);
  });
}

Tensor scale(const Tensor& a, double s) {
  Mat v = a.value() * s;
  return make_op(std::move(v), {a}, [s](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Mat v = a.value().array() + s;
  return make_op(std::move(v), {a}, [](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArgumentError("add_row: bias shape mismatch");
  Mat v = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(v), {a, row}, [](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += g;
    if (gi[1]) *gi[1] += g.colwise().sum();
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArgumentError("mul_row: shape mismatch");
  Mat v = a.value().array().rowwise() * row.value().row(0).array();
  NodePtr an = a.node(), rn = row.node();
  return make_op(std::move(v), {a, row}, [an, rn](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->array() += g.array().rowwise() * rn->value.row(0).array();
    if (gi[1]) *gi[1] += g.cwiseProduct(an->value).colwise().sum();
  });
}

Tensor relu(const Tensor& a) {
  Mat v = a.value().cwiseMax(0.0);
  NodePtr an = a.node();
  return make_op(std::move(v), {a}, [an](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->array() += (an->value.array() > 0.0).select(g.array(), 0.0);
  });
}

Tensor gelu(const Tensor& a) {
  // tanh approximation
  static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  const Mat& x = a.value();
  Mat inner = (k * (x.array() + 0.044715 * x.array().cube())).matrix();
  Mat th = inner.array().tanh().matrix();
  Mat v = (0.5 * x.array() * (1.0 + th.array())).matrix();
  NodePtr an = a.node();
  return make_op(std::move(v), {a}, [an, th](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    const auto x = an->value.array();
    auto dinner = k * (1.0 + 3.0 * 0.044715 * x.square());
    auto d = 0.5 * (1.0 + th.array()) + 0.5 * x * (1.0 - th.array().square()) * dinner;
    gi[0]->array() += g.array() * d;
  });
}

Tensor silu(const Tensor& a) {
  Mat s = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Mat v = a.value().cwiseProduct(s);
  NodePtr an = a.node();
  return make_op(std::move(v), {a}, [an, s](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    gi[0]->array() += g.array() * (s.array() * (1.0 + an->value.array() * (1.0 - s.array())));
  });
}

Tensor tanh(const Tensor& a) {
  Mat v = a.value().array().tanh().matrix();
  Mat keep = v;
  return make_op(std::move(v), {a}, [keep](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->array() += g.array() * (1.0 - keep.array().square());
  });
}

Tensor sigmoid(const Tensor& a) {
  Mat v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Mat keep = v;
  return make_op(std::move(v), {a}, [keep](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->array() += g.array() * keep.array() * (1.0 - keep.array());
  });
}

Tensor square(const Tensor& a) {
  Mat v = a.value().array().square().matrix();
  NodePtr an = a.node();
  return make_op(std::move(v), {a}, [an](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += 2.0 * g.cwiseProduct(an->value);
  });
}

Tensor softmax_rows(const Tensor& a, const BoolMat* mask) {
  const Mat& x = a.value();
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw ArgumentError("softmax_rows: mask shape mismatch");
  }
  Mat p(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < x.cols(); ++c) {
      if (!mask || (*mask)(r, c)) mx = std::max(mx, x(r, c));
    }
    double total = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      const double e = (!mask || (*mask)(r, c)) ? std::exp(x(r, c) - mx) : 0.0;
      p(r, c) = e;
      total += e;
    }
    if (total > 0.0) p.row(r) /= total;
  }
  Mat keep = p;
  return make_op(std::move(p), {a}, [keep](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    Vec dot = g.cwiseProduct(keep).rowwise().sum();
    gi[0]->array() += keep.array() * (g.colwise() - dot).array();
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const Mat& x = a.value();
  const Index n = x.cols();
  if (gamma.cols() != n || beta.cols() != n) throw ArgumentError("layer_norm: affine shape mismatch");
  Vec mu = x.rowwise().mean();
  Mat xc = x.colwise() - mu;
  Vec inv = ((xc.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  Mat xhat = xc.array().colwise() * inv.array();
  Mat v = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  NodePtr gn = gamma.node();
  return make_op(std::move(v), {a, gamma, beta},
                 [xhat, inv, gn, n](const Mat& g, const std::vector<Mat*>& gi) {
                   if (gi[1]) *gi[1] += g.cwiseProduct(xhat).colwise().sum();
                   if (gi[2]) *gi[2] += g.colwise().sum();
                   if (gi[0]) {
                     Mat gx = g.array().rowwise() * gn->value.row(0).array();
                     Vec m1 = gx.rowwise().mean();
                     Vec m2 = gx.cwiseProduct(xhat).rowwise().mean();
                     Mat d = (gx.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                     gi[0]->array() += d.array().colwise() * inv.array();
                   }
                   (void)n;
                 });
}

Tensor normalize_rows(const Tensor& a, double eps) {
  const Mat& x = a.value();
  Vec norm = x.rowwise().norm().array().max(eps).matrix();
  Mat v = x.array().colwise() / norm.array();
  Mat keep = v;
  return make_op(std::move(v), {a}, [keep, norm](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    Vec dot = g.cwiseProduct(keep).rowwise().sum();
    Mat d = g - (keep.array().colwise() * dot.array()).matrix();
    gi[0]->array() += d.array().colwise() / norm.array();
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const Index r = parts[0].rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ArgumentError("concat_cols: row mismatch");
    total += p.cols();
  }
  Mat v(r, total);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Index> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return make_op(std::move(v), parts, [offsets, widths](const Mat& g, const std::vector<Mat*>& gi) {
    for (size_t i = 0; i < gi.size(); ++i) {
      if (gi[i]) *gi[i] += g.middleCols(offsets[i], widths[i]);
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const Index c = parts[0].cols();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ArgumentError("concat_rows: column mismatch");
    total += p.rows();
  }
  Mat v(total, c);
  std::vector<Index> offsets, heights;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    heights.push_back(p.rows());
    off += p.rows();
  }
  return make_op(std::move(v), parts, [offsets, heights](const Mat& g, const std::vector<Mat*>& gi) {
    for (size_t i = 0; i < gi.size(); ++i) {
      if (gi[i]) *gi[i] += g.middleRows(offsets[i], heights[i]);
    }
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ArgumentError("slice_cols: out of range");
  Mat v = a.value().middleCols(start, count);
  return make_op(std::move(v), {a}, [start, count](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->middleCols(start, count) += g;
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ArgumentError("slice_rows: out of range");
  Mat v = a.value().middleRows(start, count);
  return make_op(std::move(v), {a}, [start, count](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->middleRows(start, count) += g;
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<Index>& rows) {
  Mat v(static_cast<Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ArgumentError("gather_rows: index out of range");
    v.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  return make_op(std::move(v), {a}, [rows](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    for (size_t i = 0; i < rows.size(); ++i) gi[0]->row(rows[i]) += g.row(static_cast<Index>(i));
  });
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
  if (rows * cols != a.rows() * a.cols()) throw ArgumentError("reshape: element count mismatch");
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const Index r0 = a.rows(), c0 = a.cols();
  return make_op(std::move(v), {a}, [r0, c0](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) *gi[0] += Eigen::Map<const Mat>(g.data(), r0, c0);
  });
}

Tensor diff_rows(const Tensor& a) {
  if (a.rows() < 2) return make_op(Mat(0, a.cols()), {a}, [](const Mat&, const std::vector<Mat*>&) {});
  const Index n = a.rows() - 1;
  Mat v = a.value().bottomRows(n) - a.value().topRows(n);
  return make_op(std::move(v), {a}, [n](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    gi[0]->bottomRows(n) += g;
    gi[0]->topRows(n) -= g;
  });
}

Tensor sum(const Tensor& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return make_op(std::move(v), {a}, [](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0]) gi[0]->array() += g(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  Mat v(1, 1);
  v(0, 0) = n > 0 ? a.value().sum() / n : 0.0;
  return make_op(std::move(v), {a}, [n](const Mat& g, const std::vector<Mat*>& gi) {
    if (gi[0] && n > 0) gi[0]->array() += g(0, 0) / n;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  const double n = static_cast<double>(a.value().size());
  Mat diff = a.value() - b.value();
  Mat v(1, 1);
  v(0, 0) = n > 0 ? diff.squaredNorm() / n : 0.0;
  return make_op(std::move(v), {a, b}, [diff, n](const Mat& g, const std::vector<Mat*>& gi) {
    if (n == 0) return;
    const double s = 2.0 * g(0, 0) / n;
    if (gi[0]) *gi[0] += s * diff;
    if (gi[1]) *gi[1] -= s * diff;
  });
}

Tensor mean_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mean_abs_diff");
  const double n = static_cast<double>(a.value().size());
  Mat diff = a.value() - b.value();
  Mat v(1, 1);
  v(0, 0) = n > 0 ? diff.cwiseAbs().sum() / n : 0.0;
  Mat sgn = diff.array().sign().matrix();
  return make_op(std::move(v), {a, b}, [sgn, n](const Mat& g, const std::vector<Mat*>& gi) {
    if (n == 0) return;
    const double s = g(0, 0) / n;
    if (gi[0]) *gi[0] += s * sgn;
    if (gi[1]) *gi[1] -= s * sgn;
  });
}

Tensor conv3x3(const Tensor& x, int height, int width, const Tensor& weight, const Tensor& bias) {
  const Index cin = x.cols();
  if (x.rows() != static_cast<Index>(height) * width) throw ArgumentError("conv3x3: pixel count mismatch");
  if (weight.rows() != 9 * cin) throw ArgumentError("conv3x3: weight rows must be 9 * Cin");
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw ArgumentError("conv3x3: bias shape mismatch");
  Mat col = im2col3(x.value(), height, width);
  Mat v = col * weight.value();
  v.rowwise() += bias.value().row(0);
  NodePtr xn = x.node(), wn = weight.node();
  return make_op(std::move(v), {x, weight, bias},
                 [xn, wn, height, width, cin](const Mat& g, const std::vector<Mat*>& gi) {
                   if (gi[1]) {
                     // Recompute the patch matrix instead of holding it alive.
                     Mat col2 = im2col3(xn->value, height, width);
                     gi[1]->noalias() += col2.transpose() * g;
                   }
                   if (gi[2]) *gi[2] += g.colwise().sum();
                   if (gi[0]) {
                     Mat dcol = g * wn->value.transpose();
                     col2im3_add(dcol, height, width, cin, *gi[0]);
                   }
                 });
}

Tensor avg_pool2(const Tensor& x, int height, int width) {
  if (height % 2 || width % 2) throw ArgumentError("avg_pool2: odd image size");
  if (x.rows() != static_cast<Index>(height) * width) throw ArgumentError("avg_pool2: pixel count mismatch");
  const int h2 = height / 2, w2 = width / 2;
  const Index c = x.cols();
  Mat v = Mat::Zero(static_cast<Index>(h2) * w2, c);
  const Mat& xv = x.value();
  for (int y = 0; y < h2; ++y) {
    for (int xx = 0; xx < w2; ++xx) {
      auto r = v.row(static_cast<Index>(y) * w2 + xx);
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) r += xv.row(static_cast<Index>(2 * y + dy) * width + 2 * xx + dx);
      r *= 0.25;
    }
  }
  return make_op(std::move(v), {x}, [h2, w2, width](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    for (int y = 0; y < h2; ++y)
      for (int xx = 0; xx < w2; ++xx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            gi[0]->row(static_cast<Index>(2 * y + dy) * width + 2 * xx + dx) +=
                0.25 * g.row(static_cast<Index>(y) * w2 + xx);
  });
}

Tensor upsample2(const Tensor& x, int height, int width) {
  if (x.rows() != static_cast<Index>(height) * width) throw ArgumentError("upsample2: pixel count mismatch");
  const int h2 = height * 2, w2 = width * 2;
  Mat v(static_cast<Index>(h2) * w2, x.cols());
  const Mat& xv = x.value();
  for (int y = 0; y < h2; ++y)
    for (int xx = 0; xx < w2; ++xx)
      v.row(static_cast<Index>(y) * w2 + xx) = xv.row(static_cast<Index>(y / 2) * width + xx / 2);
  return make_op(std::move(v), {x}, [h2, w2, width](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    for (int y = 0; y < h2; ++y)
      for (int xx = 0; xx < w2; ++xx)
        gi[0]->row(static_cast<Index>(y / 2) * width + xx / 2) += g.row(static_cast<Index>(y) * w2 + xx);
  });
}

}  // namespace mango::ag
