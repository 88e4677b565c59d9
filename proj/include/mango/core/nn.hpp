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

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mango/core/tensor.hpp"

namespace mango::nn {

using ag::Tensor;
using Rng = std::mt19937_64;

Mat randn(Index rows, Index cols, Rng& rng, double stddev = 1.0);
Mat uniform(Index rows, Index cols, Rng& rng, double bound);

/// Ordered, named list of trainable leaves. Order is the checkpoint order.
class ParameterSet {
 public:
  void add(std::string name, Tensor t);
  void append(const ParameterSet& other);
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  size_t size() const { return items_.size(); }
  Index scalar_count() const;
  void zero_grad();
  // Global L2 norm of gradients, then rescales when above max_norm.
  double clip_grad_norm(double max_norm);
  // FNV-1a over the raw parameter bytes; used to prove a step left a set untouched.
  uint64_t hash() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Linear() = default;
  Linear(Index in, Index out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& ps, const std::string& prefix) const;
  void zero();
};

struct LayerNorm {
  Tensor gamma, beta;
  LayerNorm() = default;
  explicit LayerNorm(Index dim);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& ps, const std::string& prefix) const;
};

struct MultiHeadAttention {
  Index dim = 0;
  Index heads = 1;
  Linear q, k, v, o;

  MultiHeadAttention() = default;
  MultiHeadAttention(Index dim, Index heads, Rng& rng);
  // mask(i, j) == false forbids query i from attending key j. When `probs` is
  // given it receives the per-head attention matrices.
  Tensor operator()(const Tensor& queries, const Tensor& keys, const BoolMat* mask = nullptr,
                    std::vector<Mat>* probs = nullptr) const;
  void collect(ParameterSet& ps, const std::string& prefix) const;
};

struct FeedForward {
  Linear fc1, fc2;
  FeedForward() = default;
  FeedForward(Index dim, Index hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& ps, const std::string& prefix) const;
};

/// Pre-norm transformer encoder block.
struct EncoderLayer {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ff;
  EncoderLayer() = default;
  EncoderLayer(Index dim, Index heads, Index hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& ps, const std::string& prefix) const;
};

struct Conv3x3 {
  Tensor weight;  // 9*in x out
  Tensor bias;    // 1 x out
  Conv3x3() = default;
  Conv3x3(Index in, Index out, Rng& rng);
  Tensor operator()(const Tensor& x, int height, int width) const;
  void collect(ParameterSet& ps, const std::string& prefix) const;
  void zero();
};

/// Sinusoidal embedding of a scalar position/time, width `dim` (even).
RowVec sinusoidal_embedding(double position, Index dim);
Mat sinusoidal_table(Index count, Index dim, double offset = 0.0);

enum class LrSchedule { kConstant, kCosine, kWarmupDecay };
LrSchedule parse_schedule(const std::string& id);
std::string schedule_name(LrSchedule s);
double scheduled_lr(LrSchedule s, double base_lr, int step, int total_steps, int warmup_steps);

/// Adaptive moment estimation over a ParameterSet.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParameterSet& params, double lr);
  int steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace mango::nn
