// Copyright 2026 The minis2t Authors
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
//
// Shared helpers for the test suite. The finite-difference checker here is
// the reference oracle for every gradient in the project: it only ever calls
// the forward pass, so it stays independent of the backward implementations
// it is used to judge.

#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "minis2t/common.hpp"
#include "minis2t/tensor.hpp"

namespace minis2t::testutil {

inline TensorT<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                                     double hi = 1.0) {
  auto t = TensorT<double>::zeros(shape);
  for (int64_t i = 0; i < t.size(); ++i) {
    t.data()[i] = lo + (hi - lo) * rng.uniform();
  }
  return t;
}

inline TensorT<float> random_tensor_f(const Shape& shape, Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  auto t = TensorT<float>::zeros(shape);
  for (int64_t i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<float>(lo + (hi - lo) * rng.uniform());
  }
  return t;
}

// |a - b| / max(1, |a|, |b|): relative for large values, absolute near zero.
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Central-difference gradient check in double precision.
//
// `forward` must recompute the scalar loss from scratch on each call, reading
// the current values of `leaves`. Returns the worst rel_err between analytic
// and numeric gradients over every coordinate of every leaf, where the
// analytic side is obtained by one taped forward + backward.
inline double max_grad_error(const std::function<TensorT<double>()>& forward,
                             std::vector<TensorT<double>> leaves, double h = 1e-5) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  TapeT<double> tape;
  {
    TapeScope<double> scope(tape);
    TensorT<double> loss = forward();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    for (int64_t i = 0; i < leaf.size(); ++i) {
      double saved = leaf.data()[i];
      leaf.data()[i] = saved + h;
      double up = forward().item();
      leaf.data()[i] = saved - h;
      double down = forward().item();
      leaf.data()[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[li][static_cast<size_t>(i)], numeric));
    }
  }
  return worst;
}

// Like max_grad_error but checks only the listed coordinates of each leaf
// (pairs of leaf index, flat coordinate). Used for the end-to-end model
// check where probing every parameter would be wasteful.
inline double max_grad_error_sampled(const std::function<TensorT<double>()>& forward,
                                     std::vector<TensorT<double>> leaves,
                                     const std::vector<std::pair<size_t, int64_t>>& coords,
                                     double h = 1e-5) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  TapeT<double> tape;
  {
    TapeScope<double> scope(tape);
    TensorT<double> loss = forward();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  double worst = 0.0;
  for (auto [li, i] : coords) {
    auto& leaf = leaves[li];
    double saved = leaf.data()[i];
    leaf.data()[i] = saved + h;
    double up = forward().item();
    leaf.data()[i] = saved - h;
    double down = forward().item();
    leaf.data()[i] = saved;
    double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[li][static_cast<size_t>(i)], numeric));
  }
  return worst;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    std::string unique = std::to_string(::getpid()) + "_" + std::to_string(counter()++);
    path_ = (fs::temp_directory_path() / ("minis2t_" + tag + "_" + unique)).string();
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string path_;
};

}  // namespace minis2t::testutil
