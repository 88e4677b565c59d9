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

#include "mango/core/nn.hpp"

#include <cmath>
#include <cstring>

#include "mango/core/errors.hpp"

namespace mango::nn {

Mat randn(Index rows, Index cols, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Mat uniform(Index rows, Index cols, Rng& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void ParameterSet::add(std::string name, Tensor t) { items_.emplace_back(std::move(name), std::move(t)); }

void ParameterSet::append(const ParameterSet& other) {
  for (const auto& it : other.items_) items_.push_back(it);
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& [_, t] : items_) n += t.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

double ParameterSet::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : items_) {
    if (t.has_grad()) sq += t.node()->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& [_, t] : items_) {
      if (t.has_grad()) t.node()->grad *= s;
    }
  }
  return norm;
}

uint64_t ParameterSet::hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& [_, t] : items_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.value().data());
    const size_t n = static_cast<size_t>(t.value().size()) * sizeof(double);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Linear::Linear(Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor::parameter(uniform(in, out, rng, bound));
  bias = Tensor::parameter(uniform(1, out, rng, bound));
}

Tensor Linear::operator()(const Tensor& x) const { return ag::add_row(ag::matmul(x, weight), bias); }

void Linear::collect(ParameterSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".weight", weight);
  ps.add(prefix + ".bias", bias);
}

void Linear::zero() {
  weight.mutable_value().setZero();
  bias.mutable_value().setZero();
}

LayerNorm::LayerNorm(Index dim)
    : gamma(Tensor::parameter(Mat::Ones(1, dim))), beta(Tensor::parameter(Mat::Zero(1, dim))) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }

void LayerNorm::collect(ParameterSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".gamma", gamma);
  ps.add(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(Index dim_, Index heads_, Rng& rng)
    : dim(dim_), heads(heads_), q(dim_, dim_, rng), k(dim_, dim_, rng), v(dim_, dim_, rng), o(dim_, dim_, rng) {
  if (dim_ % heads_ != 0) throw ArgumentError("attention width must be divisible by head count");
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys, const BoolMat* mask,
                                      std::vector<Mat>* probs) const {
  Tensor qp = q(queries), kp = k(keys), vp = v(keys);
  const Index dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(heads));
  if (probs) probs->clear();
  for (Index h = 0; h < heads; ++h) {
    Tensor qh = ag::slice_cols(qp, h * dh, dh);
    Tensor kh = ag::slice_cols(kp, h * dh, dh);
    Tensor vh = ag::slice_cols(vp, h * dh, dh);
    Tensor p = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), mask);
    if (probs) probs->push_back(p.value());
    outs.push_back(ag::matmul(p, vh));
  }
  return o(heads == 1 ? outs[0] : ag::concat_cols(outs));
}

void MultiHeadAttention::collect(ParameterSet& ps, const std::string& prefix) const {
  q.collect(ps, prefix + ".q");
  k.collect(ps, prefix + ".k");
  v.collect(ps, prefix + ".v");
  o.collect(ps, prefix + ".o");
}

FeedForward::FeedForward(Index dim, Index hidden, Rng& rng) : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x) const { return fc2(ag::gelu(fc1(x))); }

void FeedForward::collect(ParameterSet& ps, const std::string& prefix) const {
  fc1.collect(ps, prefix + ".fc1");
  fc2.collect(ps, prefix + ".fc2");
}

EncoderLayer::EncoderLayer(Index dim, Index heads, Index hidden, Rng& rng)
    : ln1(dim), ln2(dim), attn(dim, heads, rng), ff(dim, hidden, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x) const {
  Tensor h = ln1(x);
  Tensor y = ag::add(x, attn(h, h));
  return ag::add(y, ff(ln2(y)));
}

void EncoderLayer::collect(ParameterSet& ps, const std::string& prefix) const {
  ln1.collect(ps, prefix + ".ln1");
  ln2.collect(ps, prefix + ".ln2");
  attn.collect(ps, prefix + ".attn");
  ff.collect(ps, prefix + ".ff");
}

Conv3x3::Conv3x3(Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(9.0 * static_cast<double>(in));
  weight = Tensor::parameter(uniform(9 * in, out, rng, bound));
  bias = Tensor::parameter(uniform(1, out, rng, bound));
}

Tensor Conv3x3::operator()(const Tensor& x, int height, int width) const {
  return ag::conv3x3(x, height, width, weight, bias);
}

void Conv3x3::collect(ParameterSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".weight", weight);
  ps.add(prefix + ".bias", bias);
}

void Conv3x3::zero() {
  weight.mutable_value().setZero();
  bias.mutable_value().setZero();
}

RowVec sinusoidal_embedding(double position, Index dim) {
  RowVec e(dim);
  const Index half = dim / 2;
  for (Index i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e(i) = std::sin(position * freq);
    e(half + i) = std::cos(position * freq);
  }
  if (dim % 2) e(dim - 1) = 0.0;
  return e;
}

Mat sinusoidal_table(Index count, Index dim, double offset) {
  Mat m(count, dim);
  for (Index i = 0; i < count; ++i) m.row(i) = sinusoidal_embedding(static_cast<double>(i) + offset, dim);
  return m;
}

LrSchedule parse_schedule(const std::string& id) {
  if (id == "constant") return LrSchedule::kConstant;
  if (id == "cosine") return LrSchedule::kCosine;
  if (id == "warmup-decay") return LrSchedule::kWarmupDecay;
  throw ConfigError("unknown learning-rate schedule '" + id + "'");
}

std::string schedule_name(LrSchedule s) {
  switch (s) {
    case LrSchedule::kConstant: return "constant";
    case LrSchedule::kCosine: return "cosine";
    case LrSchedule::kWarmupDecay: return "warmup-decay";
  }
  return "constant";
}

double scheduled_lr(LrSchedule s, double base_lr, int step, int total_steps, int warmup_steps) {
  const double total = std::max(1, total_steps);
  switch (s) {
    case LrSchedule::kConstant:
      return base_lr;
    case LrSchedule::kCosine:
      return 0.5 * base_lr * (1.0 + std::cos(M_PI * std::min<double>(step, total) / total));
    case LrSchedule::kWarmupDecay: {
      if (warmup_steps > 0 && step < warmup_steps) return base_lr * (step + 1) / warmup_steps;
      const double rest = std::max(1.0, total - warmup_steps);
      const double frac = std::clamp((step - warmup_steps) / rest, 0.0, 1.0);
      return base_lr * (1.0 - 0.9 * frac);
    }
  }
  return base_lr;
}

void Adam::step(ParameterSet& params, double lr) {
  auto& items = params.items();
  if (m_.size() != items.size()) {
    m_.clear();
    v_.clear();
    for (const auto& [_, t] : items) {
      m_.push_back(Mat::Zero(t.rows(), t.cols()));
      v_.push_back(Mat::Zero(t.rows(), t.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < items.size(); ++i) {
    auto& t = items[i].second;
    if (!t.has_grad()) continue;
    const Mat& g = t.node()->grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    t.mutable_value().array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace mango::nn
