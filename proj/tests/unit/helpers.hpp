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

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "mango/core/tensor.hpp"

namespace mango::test {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mango_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

// Central difference of f at x along coordinate (r, c).
inline double central_diff(const std::function<double(const Mat&)>& f, Mat x, Index r, Index c, double eps) {
  const double x0 = x(r, c);
  x(r, c) = x0 + eps;
  const double fp = f(x);
  x(r, c) = x0 - eps;
  const double fm = f(x);
  return (fp - fm) / (2 * eps);
}

// Max relative error between reverse-mode and central differences over every entry.
inline double grad_check(const std::function<ag::Tensor(const ag::Tensor&)>& f, const Mat& x, double eps = 1e-6) {
  ag::Tensor t = ag::Tensor::parameter(x);
  f(t).backward();
  const Mat g = t.grad();
  auto val = [&](const Mat& m) { return f(ag::Tensor::constant(m)).item(); };
  double worst = 0.0;
  for (Index r = 0; r < x.rows(); ++r)
    for (Index c = 0; c < x.cols(); ++c) {
      const double num = central_diff(val, x, r, c, eps);
      const double err = std::abs(num - g(r, c)) / std::max({std::abs(num), std::abs(g(r, c)), 1e-4});
      worst = std::max(worst, err);
    }
  return worst;
}

inline Mat random_mat(Index r, Index c, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace mango::test
