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
// Dense row-major tensors with reverse-mode automatic differentiation.
//
// The design is a conventional tape: forward ops compute eagerly and, when a
// tape is active and an input requires gradients, push a backward closure.
// Push order is topological order by construction, so backward() is a single
// reverse sweep that visits every node exactly once. Gradients accumulate
// with += into per-node buffers; a node whose buffer was never touched
// contributed nothing to the loss and reads back as zeros.
//
// Everything is templated on the scalar type: training runs in float, the
// finite-difference gradient checks run the same code in double.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "minis2t/common.hpp"

namespace minis2t {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class S>
class TapeT;

template <class S>
class TensorT {
 public:
  struct Node {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad;  // empty until first accumulation
    bool requires_grad = false;
  };

  TensorT() = default;

  static TensorT zeros(const Shape& shape) {
    return TensorT(shape, std::vector<S>(static_cast<size_t>(checked_numel(shape)), S(0)));
  }

  static TensorT full(const Shape& shape, S value) {
    return TensorT(shape, std::vector<S>(static_cast<size_t>(checked_numel(shape)), value));
  }

  static TensorT from_data(const Shape& shape, std::vector<S> values) {
    if (static_cast<int64_t>(values.size()) != checked_numel(shape)) {
      throw ShapeError("from_data: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    }
    return TensorT(shape, std::move(values));
  }

  static TensorT scalar(S value) { return TensorT({1}, {value}); }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->values.size()); }

  S* data() { return node_->values.data(); }
  const S* data() const { return node_->values.data(); }
  std::vector<S>& values() { return node_->values; }
  const std::vector<S>& values() const { return node_->values; }

  S item() const {
    if (size() != 1) {
      throw ContractError("item(): tensor has " + std::to_string(size()) +
                          " elements, expected exactly 1");
    }
    return node_->values[0];
  }

  // Multi-dimensional accessor, mostly for tests. No bounds checking beyond
  // rank.
  S at(std::initializer_list<int> idx) const {
    int64_t off = 0;
    size_t i = 0;
    for (int v : idx) {
      off = off * node_->shape[i] + v;
      ++i;
    }
    return node_->values[static_cast<size_t>(off)];
  }

  TensorT& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    return *this;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient of the last backward() pass. A leaf that never received a
  // contribution reads back as zeros of the right shape.
  const std::vector<S>& grad() const {
    if (!node_->requires_grad) {
      throw ContractError("grad(): tensor does not require gradients");
    }
    if (node_->grad.empty()) {
      node_->grad.assign(node_->values.size(), S(0));
    }
    return node_->grad;
  }

  void zero_grad() { node_->grad.clear(); }

  // Deep copy with no tape attachment.
  TensorT clone() const { return TensorT(node_->shape, node_->values); }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  TensorT(Shape shape, std::vector<S> values)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->values = std::move(values);
  }

  static int64_t checked_numel(const Shape& shape) {
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    return shape_numel(shape);
  }

  std::shared_ptr<Node> node_;

  friend class TapeT<S>;
};

namespace detail {

template <class S>
std::vector<S>& grad_buffer(const std::shared_ptr<typename TensorT<S>::Node>& n) {
  if (n->grad.empty()) n->grad.assign(n->values.size(), S(0));
  return n->grad;
}

template <class S>
void check_finite(const char* op, const TensorT<S>& t) {
  for (S v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

}  // namespace detail

// Records of one training step's forward pass, in push (= topological)
// order. backward() seeds d(loss)=1 and walks the records in reverse.
template <class S>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  void record(const char* op, std::function<void()> backward_fn) {
    records_.push_back({op, std::move(backward_fn)});
  }

  bool empty() const { return records_.empty(); }
  size_t size() const { return records_.size(); }

  void backward(const TensorT<S>& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward: loss must be a defined scalar tensor");
    }
    if (records_.empty()) {
      throw ContractError("backward: tape is empty");
    }
    detail::grad_buffer<S>(loss.node())[0] += S(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      it->backward_fn();
    }
  }

  static TapeT*& active() {
    thread_local TapeT* t = nullptr;
    return t;
  }

 private:
  struct Record {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Record> records_;
};

// RAII activation of a tape for the current thread. Ops record onto the
// active tape; with no active tape the forward pass is inference-only.
template <class S>
class TapeScope {
 public:
  explicit TapeScope(TapeT<S>& tape) : prev_(TapeT<S>::active()) {
    TapeT<S>::active() = &tape;
  }
  ~TapeScope() { TapeT<S>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  TapeT<S>* prev_;
};

namespace detail {

template <class S>
bool should_record(std::initializer_list<const TensorT<S>*> inputs) {
  if (TapeT<S>::active() == nullptr) return false;
  for (const TensorT<S>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Right-aligned broadcast compatibility: every dim of `small` must equal the
// corresponding trailing dim of `big` or be 1.
inline bool broadcast_ok(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i] && small[i] != 1) return false;
  }
  return true;
}

// Maps a linear index of `big` to the linear index of broadcast `small`.
struct BroadcastMap {
  // strides over big's coordinates; 0 where small broadcasts
  std::vector<int64_t> strides;
  Shape big;

  BroadcastMap(const Shape& big_shape, const Shape& small_shape) : big(big_shape) {
    strides.assign(big.size(), 0);
    size_t off = big.size() - small_shape.size();
    int64_t stride = 1;
    for (size_t i = small_shape.size(); i-- > 0;) {
      strides[off + i] = (small_shape[i] == 1) ? 0 : stride;
      stride *= small_shape[i];
    }
  }

  int64_t map(int64_t big_linear) const {
    int64_t out = 0;
    for (size_t i = big.size(); i-- > 0;) {
      int64_t coord = big_linear % big[i];
      big_linear /= big[i];
      out += coord * strides[i];
    }
    return out;
  }

  bool identity() const {
    int64_t stride = 1;
    for (size_t i = big.size(); i-- > 0;) {
      if (strides[i] != stride) return false;
      stride *= big[i];
    }
    return true;
  }
};

// C[m,n] += A[m,k] * B[k,n]
template <class S>
void mm_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<int64_t>(i) * k;
    S* crow = c + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      S av = arow[p];
      if (av == S(0)) continue;
      const S* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]   (i.e. C += A * B^T)
template <class S>
void mm_bt_acc(const S* a, const S* b, S* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<int64_t>(i) * n;
    S* crow = c + static_cast<int64_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const S* brow = b + static_cast<int64_t>(j) * n;
      S acc = S(0);
      for (int p = 0; p < n; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k,n] += A[m,k] * B[m,n]   (i.e. C += A^T * B)
template <class S>
void at_b_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<int64_t>(i) * k;
    const S* brow = b + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      S av = arow[p];
      if (av == S(0)) continue;
      S* crow = c + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

// Matrix product. Supported shapes:
//   [M,K] x [K,N]      -> [M,N]
//   [B,M,K] x [B,K,N]  -> [B,M,N]
//   [B,M,K] x [K,N]    -> [B,M,N]   (shared right operand)
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  int batch = 1, m = 0, k = 0, n = 0;
  bool a_batched = false, b_batched = false;
  if (as.size() == 2 && bs.size() == 2) {
    m = as[0]; k = as[1]; n = bs[1];
    if (bs[0] != k) throw ShapeError("matmul: inner dims differ, " + shape_str(as) + " x " + shape_str(bs));
  } else if (as.size() == 3 && bs.size() == 3) {
    if (as[0] != bs[0] || as[2] != bs[1]) {
      throw ShapeError("matmul: incompatible batched shapes " + shape_str(as) + " x " + shape_str(bs));
    }
    batch = as[0]; m = as[1]; k = as[2]; n = bs[2];
    a_batched = b_batched = true;
  } else if (as.size() == 3 && bs.size() == 2) {
    if (as[2] != bs[0]) {
      throw ShapeError("matmul: inner dims differ, " + shape_str(as) + " x " + shape_str(bs));
    }
    batch = as[0]; m = as[1]; k = as[2]; n = bs[1];
    a_batched = true;
  } else {
    throw ShapeError("matmul: unsupported ranks " + shape_str(as) + " x " + shape_str(bs));
  }

  Shape out_shape = a_batched ? Shape{batch, m, n} : Shape{m, n};
  TensorT<S> out = TensorT<S>::zeros(out_shape);
  const S* ap = a.data();
  const S* bp = b.data();
  S* op = out.data();
  for (int bi = 0; bi < batch; ++bi) {
    detail::mm_acc(ap + (a_batched ? static_cast<int64_t>(bi) * m * k : 0),
                   bp + (b_batched ? static_cast<int64_t>(bi) * k * n : 0),
                   op + static_cast<int64_t>(bi) * m * n, m, k, n);
  }
  detail::check_finite("matmul", out);

  if (detail::should_record<S>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record("matmul", [an, bn, on, batch, m, k, n, a_batched, b_batched]() {
      if (on->grad.empty()) return;
      const S* go = on->grad.data();
      if (an->requires_grad) {
        S* ga = detail::grad_buffer<S>(an).data();
        for (int bi = 0; bi < batch; ++bi) {
          detail::mm_bt_acc(go + static_cast<int64_t>(bi) * m * n,
                            bn->values.data() + (b_batched ? static_cast<int64_t>(bi) * k * n : 0),
                            ga + (a_batched ? static_cast<int64_t>(bi) * m * k : 0), m, n, k);
        }
      }
      if (bn->requires_grad) {
        S* gb = detail::grad_buffer<S>(bn).data();
        for (int bi = 0; bi < batch; ++bi) {
          detail::at_b_acc(an->values.data() + (a_batched ? static_cast<int64_t>(bi) * m * k : 0),
                           go + static_cast<int64_t>(bi) * m * n,
                           gb + (b_batched ? static_cast<int64_t>(bi) * k * n : 0), m, k, n);
        }
      }
    });
  }
  return out;
}

namespace detail {

// Shared implementation of elementwise binary ops with right-aligned
// broadcasting of the second operand.
template <class S, class Fwd, class BwdA, class BwdB>
TensorT<S> binary_broadcast(const char* name, const TensorT<S>& a, const TensorT<S>& b,
                            Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  if (!broadcast_ok(a.shape(), b.shape())) {
    throw ShapeError(std::string(name) + ": cannot broadcast " + shape_str(b.shape()) +
                     " onto " + shape_str(a.shape()));
  }
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  BroadcastMap bmap(a.shape(), b.shape());
  const S* ap = a.data();
  const S* bp = b.data();
  S* op = out.data();
  int64_t n = a.size();
  if (bmap.identity()) {
    for (int64_t i = 0; i < n; ++i) op[i] = fwd(ap[i], bp[i]);
  } else {
    for (int64_t i = 0; i < n; ++i) op[i] = fwd(ap[i], bp[bmap.map(i)]);
  }
  check_finite(name, out);

  if (should_record<S>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record(name, [an, bn, on, bmap, n, bwd_a, bwd_b]() {
      if (on->grad.empty()) return;
      const S* go = on->grad.data();
      const S* av = an->values.data();
      const S* bv = bn->values.data();
      if (an->requires_grad) {
        S* ga = grad_buffer<S>(an).data();
        for (int64_t i = 0; i < n; ++i) {
          ga[i] += bwd_a(go[i], av[i], bv[bmap.map(i)]);
        }
      }
      if (bn->requires_grad) {
        S* gb = grad_buffer<S>(bn).data();
        for (int64_t i = 0; i < n; ++i) {
          gb[bmap.map(i)] += bwd_b(go[i], av[i], bv[bmap.map(i)]);
        }
      }
    });
  }
  return out;
}

}  // namespace detail

// Elementwise sum; b broadcasts right-aligned (dims equal or 1).
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_broadcast<S>(
      "add", a, b, [](S x, S y) { return x + y; },
      [](S g, S, S) { return g; }, [](S g, S, S) { return g; });
}

// Elementwise product; same broadcasting as add.
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_broadcast<S>(
      "mul", a, b, [](S x, S y) { return x * y; },
      [](S g, S, S y) { return g * y; }, [](S g, S x, S) { return g * x; });
}

// Multiplication by a compile-time constant.
template <class S>
TensorT<S> scale(const TensorT<S>& a, double c) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const S* ap = a.data();
  S* op = out.data();
  S cs = static_cast<S>(c);
  for (int64_t i = 0; i < a.size(); ++i) op[i] = ap[i] * cs;
  detail::check_finite("scale", out);
  if (detail::should_record<S>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record("scale", [an, on, cs]() {
      if (on->grad.empty()) return;
      S* ga = detail::grad_buffer<S>(an).data();
      const S* go = on->grad.data();
      for (size_t i = 0; i < on->grad.size(); ++i) ga[i] += go[i] * cs;
    });
  }
  return out;
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const S* ap = a.data();
  S* op = out.data();
  for (int64_t i = 0; i < a.size(); ++i) op[i] = ap[i] > S(0) ? ap[i] : S(0);
  if (detail::should_record<S>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record("relu", [an, on]() {
      if (on->grad.empty()) return;
      S* ga = detail::grad_buffer<S>(an).data();
      const S* go = on->grad.data();
      const S* av = an->values.data();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        if (av[i] > S(0)) ga[i] += go[i];
      }
    });
  }
  return out;
}

namespace detail {

template <class S>
void softmax_rows(const S* in, S* out, int64_t rows, int cols, bool log_mode) {
  for (int64_t r = 0; r < rows; ++r) {
    const S* x = in + r * cols;
    S* y = out + r * cols;
    S mx = x[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    S sum = S(0);
    for (int c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
    if (log_mode) {
      S lse = mx + std::log(sum);
      for (int c = 0; c < cols; ++c) y[c] = x[c] - lse;
    } else {
      for (int c = 0; c < cols; ++c) y[c] = std::exp(x[c] - mx) / sum;
    }
  }
}

}  // namespace detail

// Softmax over the last dimension.
template <class S>
TensorT<S> softmax(const TensorT<S>& a) {
  int cols = a.dim(a.rank() - 1);
  int64_t rows = a.size() / cols;
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  detail::softmax_rows(a.data(), out.data(), rows, cols, false);
  detail::check_finite("softmax", out);
  if (detail::should_record<S>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record("softmax", [an, on, rows, cols]() {
      if (on->grad.empty()) return;
      S* ga = detail::grad_buffer<S>(an).data();
      const S* go = on->grad.data();
      const S* y = on->values.data();
      for (int64_t r = 0; r < rows; ++r) {
        const S* yr = y + r * cols;
        const S* gr = go + r * cols;
        S dot = S(0);
        for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
        S* gar = ga + r * cols;
        for (int c = 0; c < cols; ++c) gar[c] += yr[c] * (gr[c] - dot);
      }
    });
  }
  return out;
}

// Log-softmax over the last dimension.
template <class S>
TensorT<S> log_softmax(const TensorT<S>& a) {
  int cols = a.dim(a.rank() - 1);
  int64_t rows = a.size() / cols;
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  detail::softmax_rows(a.data(), out.data(), rows, cols, true);
  detail::check_finite("log_softmax", out);
  if (detail::should_record<S>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record("log_softmax", [an, on, rows, cols]() {
      if (on->grad.empty()) return;
      S* ga = detail::grad_buffer<S>(an).data();
      const S* go = on->grad.data();
      const S* y = on->values.data();
      for (int64_t r = 0; r < rows; ++r) {
        const S* yr = y + r * cols;
        const S* gr = go + r * cols;
        S gsum = S(0);
        for (int c = 0; c < cols; ++c) gsum += gr[c];
        S* gar = ga + r * cols;
        for (int c = 0; c < cols; ++c) gar[c] += gr[c] - std::exp(yr[c]) * gsum;
      }
    });
  }
  return out;
}

// Layer normalization over the last dimension, then affine transform.
// gamma and beta have shape [D] where D is the last extent of x.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      double eps = 1e-5) {
  int d = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  int64_t rows = x.size() / d;
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  std::vector<S> xhat(static_cast<size_t>(x.size()));
  std::vector<S> inv_std(static_cast<size_t>(rows));
  const S* xp = x.data();
  const S* g = gamma.data();
  const S* b = beta.data();
  S* op = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = xp + r * d;
    S mean = S(0);
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= S(d);
    S var = S(0);
    for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= S(d);
    S istd = S(1) / std::sqrt(var + static_cast<S>(eps));
    inv_std[static_cast<size_t>(r)] = istd;
    S* hr = xhat.data() + r * d;
    S* yr = op + r * d;
    for (int c = 0; c < d; ++c) {
      hr[c] = (xr[c] - mean) * istd;
      yr[c] = g[c] * hr[c] + b[c];
    }
  }
  detail::check_finite("layer_norm", out);
  if (detail::should_record<S>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    auto xh = std::make_shared<std::vector<S>>(std::move(xhat));
    auto is = std::make_shared<std::vector<S>>(std::move(inv_std));
    TapeT<S>::active()->record("layer_norm", [xn, gn, bn, on, xh, is, rows, d]() {
      if (on->grad.empty()) return;
      const S* go = on->grad.data();
      const S* g = gn->values.data();
      const S* hat = xh->data();
      if (gn->requires_grad) {
        S* gg = detail::grad_buffer<S>(gn).data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int c = 0; c < d; ++c) gg[c] += go[r * d + c] * hat[r * d + c];
        }
      }
      if (bn->requires_grad) {
        S* gb = detail::grad_buffer<S>(bn).data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int c = 0; c < d; ++c) gb[c] += go[r * d + c];
        }
      }
      if (xn->requires_grad) {
        S* gx = detail::grad_buffer<S>(xn).data();
        for (int64_t r = 0; r < rows; ++r) {
          const S* gr = go + r * d;
          const S* hr = hat + r * d;
          S sum_dh = S(0), sum_dh_h = S(0);
          for (int c = 0; c < d; ++c) {
            S dh = gr[c] * g[c];
            sum_dh += dh;
            sum_dh_h += dh * hr[c];
          }
          S istd = (*is)[static_cast<size_t>(r)];
          for (int c = 0; c < d; ++c) {
            S dh = gr[c] * g[c];
            gx[r * d + c] += istd * (dh - sum_dh / S(d) - hr[c] * sum_dh_h / S(d));
          }
        }
      }
    });
  }
  return out;
}

// 1-d convolution over time. x: [B,T,Cin], w: [Cout,K,Cin], bias: [Cout].
// No padding; output length floor((T - K) / stride) + 1.
template <class S>
TensorT<S> conv1d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias, int stride) {
  if (x.rank() != 3 || w.rank() != 3) {
    throw ShapeError("conv1d: want x [B,T,Cin] and w [Cout,K,Cin], got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  int batch = x.dim(0), t_in = x.dim(1), c_in = x.dim(2);
  int c_out = w.dim(0), kernel = w.dim(1);
  if (w.dim(2) != c_in) {
    throw ShapeError("conv1d: channel mismatch, x " + shape_str(x.shape()) + " vs w " +
                     shape_str(w.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != c_out) {
    throw ShapeError("conv1d: bias must be [" + std::to_string(c_out) + "]");
  }
  if (stride < 1) throw ShapeError("conv1d: stride must be >= 1");
  if (t_in < kernel) {
    throw ShapeError("conv1d: input length " + std::to_string(t_in) +
                     " shorter than kernel " + std::to_string(kernel));
  }
  int t_out = (t_in - kernel) / stride + 1;
  TensorT<S> out = TensorT<S>::zeros({batch, t_out, c_out});
  const S* xp = x.data();
  const S* wp = w.data();
  const S* bp = bias.data();
  S* op = out.data();
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < t_out; ++t) {
      S* orow = op + (static_cast<int64_t>(b) * t_out + t) * c_out;
      for (int o = 0; o < c_out; ++o) orow[o] = bp[o];
      for (int k = 0; k < kernel; ++k) {
        const S* xrow = xp + (static_cast<int64_t>(b) * t_in + t * stride + k) * c_in;
        const S* wrow = wp;
        for (int o = 0; o < c_out; ++o) {
          const S* wk = wrow + (static_cast<int64_t>(o) * kernel + k) * c_in;
          S acc = S(0);
          for (int ci = 0; ci < c_in; ++ci) acc += xrow[ci] * wk[ci];
          orow[o] += acc;
        }
      }
    }
  }
  detail::check_finite("conv1d", out);
  if (detail::should_record<S>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    auto xn = x.node(), wn = w.node(), bn = bias.node(), on = out.node();
    TapeT<S>::active()->record("conv1d", [xn, wn, bn, on, batch, t_in, c_in, c_out, kernel,
                                          stride, t_out]() {
      if (on->grad.empty()) return;
      const S* go = on->grad.data();
      const S* xv = xn->values.data();
      const S* wv = wn->values.data();
      S* gx = xn->requires_grad ? detail::grad_buffer<S>(xn).data() : nullptr;
      S* gw = wn->requires_grad ? detail::grad_buffer<S>(wn).data() : nullptr;
      S* gb = bn->requires_grad ? detail::grad_buffer<S>(bn).data() : nullptr;
      for (int b = 0; b < batch; ++b) {
        for (int t = 0; t < t_out; ++t) {
          const S* grow = go + (static_cast<int64_t>(b) * t_out + t) * c_out;
          if (gb) {
            for (int o = 0; o < c_out; ++o) gb[o] += grow[o];
          }
          for (int k = 0; k < kernel; ++k) {
            int64_t xoff = (static_cast<int64_t>(b) * t_in + t * stride + k) * c_in;
            for (int o = 0; o < c_out; ++o) {
              S g = grow[o];
              if (g == S(0)) continue;
              int64_t woff = (static_cast<int64_t>(o) * kernel + k) * c_in;
              if (gx) {
                for (int ci = 0; ci < c_in; ++ci) gx[xoff + ci] += g * wv[woff + ci];
              }
              if (gw) {
                for (int ci = 0; ci < c_in; ++ci) gw[woff + ci] += g * xv[xoff + ci];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// Gathers rows of an embedding table. table: [V,D], ids: N indices.
// Output: [N,D]; callers reshape as needed.
template <class S>
TensorT<S> embedding_lookup(const TensorT<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw ShapeError("embedding_lookup: table must be [V,D], got " + shape_str(table.shape()));
  }
  int v = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw ContractError("embedding_lookup: id " + std::to_string(id) +
                          " out of range [0, " + std::to_string(v) + ")");
    }
  }
  int n = static_cast<int>(ids.size());
  TensorT<S> out = TensorT<S>::zeros({n, d});
  const S* tp = table.data();
  S* op = out.data();
  for (int i = 0; i < n; ++i) {
    std::memcpy(op + static_cast<int64_t>(i) * d, tp + static_cast<int64_t>(ids[i]) * d,
                sizeof(S) * static_cast<size_t>(d));
  }
  if (detail::should_record<S>({&table})) {
    out.set_requires_grad(true);
    auto tn = table.node(), on = out.node();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    TapeT<S>::active()->record("embedding_lookup", [tn, on, ids_copy, d]() {
      if (on->grad.empty()) return;
      S* gt = detail::grad_buffer<S>(tn).data();
      const S* go = on->grad.data();
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        int64_t dst = static_cast<int64_t>((*ids_copy)[i]) * d;
        int64_t src = static_cast<int64_t>(i) * d;
        for (int c = 0; c < d; ++c) gt[dst + c] += go[src + c];
      }
    });
  }
  return out;
}

// Concatenation along `dim`. All inputs must agree on every other extent.
template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int dim) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (dim < 0 || dim >= static_cast<int>(s0.size())) {
    throw ShapeError("concat: dim " + std::to_string(dim) + " out of range for " + shape_str(s0));
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(dim)] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != dim && s[i] != s0[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
      }
    }
    out_shape[static_cast<size_t>(dim)] += s[static_cast<size_t>(dim)];
  }
  TensorT<S> out = TensorT<S>::zeros(out_shape);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= s0[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(dim) + 1; i < s0.size(); ++i) inner *= s0[i];
  int64_t out_row = static_cast<int64_t>(out_shape[static_cast<size_t>(dim)]) * inner;
  S* op = out.data();
  int64_t col_off = 0;
  bool rec = false;
  for (const auto& p : parts) rec = rec || p.requires_grad();
  rec = rec && TapeT<S>::active() != nullptr;
  std::vector<std::pair<std::shared_ptr<typename TensorT<S>::Node>, int64_t>> bw_parts;
  for (const auto& p : parts) {
    int64_t chunk = static_cast<int64_t>(p.dim(dim)) * inner;
    const S* pp = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(op + o * out_row + col_off, pp + o * chunk,
                  sizeof(S) * static_cast<size_t>(chunk));
    }
    if (rec) bw_parts.emplace_back(p.node(), col_off);
    col_off += chunk;
  }
  if (rec) {
    out.set_requires_grad(true);
    auto on = out.node();
    TapeT<S>::active()->record("concat", [on, bw_parts, outer, inner, out_row]() {
      if (on->grad.empty()) return;
      const S* go = on->grad.data();
      for (const auto& [pn, off] : bw_parts) {
        if (!pn->requires_grad) continue;
        S* gp = detail::grad_buffer<S>(pn).data();
        int64_t chunk = static_cast<int64_t>(pn->values.size()) / outer;
        for (int64_t o = 0; o < outer; ++o) {
          const S* src = go + o * out_row + off;
          S* dst = gp + o * chunk;
          for (int64_t c = 0; c < chunk; ++c) dst[c] += src[c];
        }
      }
    });
  }
  return out;
}

// Contiguous slice [start, start+len) along `dim`.
template <class S>
TensorT<S> slice(const TensorT<S>& x, int dim, int start, int len) {
  const Shape& s = x.shape();
  if (dim < 0 || dim >= static_cast<int>(s.size())) {
    throw ShapeError("slice: dim " + std::to_string(dim) + " out of range for " + shape_str(s));
  }
  if (start < 0 || len <= 0 || start + len > s[static_cast<size_t>(dim)]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[static_cast<size_t>(dim)] = len;
  TensorT<S> out = TensorT<S>::zeros(out_shape);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(dim) + 1; i < s.size(); ++i) inner *= s[i];
  int64_t in_row = static_cast<int64_t>(s[static_cast<size_t>(dim)]) * inner;
  int64_t out_chunk = static_cast<int64_t>(len) * inner;
  const S* xp = x.data();
  S* op = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(op + o * out_chunk, xp + o * in_row + static_cast<int64_t>(start) * inner,
                sizeof(S) * static_cast<size_t>(out_chunk));
  }
  if (detail::should_record<S>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    TapeT<S>::active()->record("slice", [xn, on, outer, inner, in_row, out_chunk, start]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(xn).data();
      const S* go = on->grad.data();
      for (int64_t o = 0; o < outer; ++o) {
        S* dst = gx + o * in_row + static_cast<int64_t>(start) * inner;
        const S* src = go + o * out_chunk;
        for (int64_t c = 0; c < out_chunk; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

namespace detail {

template <class S>
void permute_copy(const S* in, S* out, const Shape& in_shape, int d0, int d1, bool forward) {
  // Walks the input linearly, computing the output offset with d0/d1 swapped.
  size_t rank = in_shape.size();
  Shape out_shape = in_shape;
  std::swap(out_shape[static_cast<size_t>(d0)], out_shape[static_cast<size_t>(d1)]);
  std::vector<int64_t> out_strides(rank, 1);
  for (size_t i = rank - 1; i > 0; --i) {
    out_strides[i - 1] = out_strides[i] * out_shape[i];
  }
  std::vector<int> coord(rank, 0);
  int64_t n = shape_numel(in_shape);
  for (int64_t linear = 0; linear < n; ++linear) {
    int64_t off = 0;
    for (size_t i = 0; i < rank; ++i) {
      size_t oi = i;
      if (static_cast<int>(i) == d0) oi = static_cast<size_t>(d1);
      else if (static_cast<int>(i) == d1) oi = static_cast<size_t>(d0);
      off += static_cast<int64_t>(coord[i]) * out_strides[oi];
    }
    if (forward) out[off] = in[linear];
    else out[linear] += in[off];
    for (size_t i = rank; i-- > 0;) {
      if (++coord[i] < in_shape[i]) break;
      coord[i] = 0;
    }
  }
}

}  // namespace detail

// Materialized transpose swapping dims d0 and d1.
template <class S>
TensorT<S> transpose(const TensorT<S>& x, int d0, int d1) {
  int r = x.rank();
  if (d0 < 0 || d0 >= r || d1 < 0 || d1 >= r) {
    throw ShapeError("transpose: dims (" + std::to_string(d0) + ", " + std::to_string(d1) +
                     ") out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<size_t>(d0)], out_shape[static_cast<size_t>(d1)]);
  TensorT<S> out = TensorT<S>::zeros(out_shape);
  detail::permute_copy(x.data(), out.data(), x.shape(), d0, d1, true);
  if (detail::should_record<S>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Shape in_shape = x.shape();
    TapeT<S>::active()->record("transpose", [xn, on, in_shape, d0, d1]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(xn).data();
      detail::permute_copy(on->grad.data(), gx, in_shape, d0, d1, false);
    });
  }
  return out;
}

// Reshape to a new shape with identical element count. Copies.
template <class S>
TensorT<S> reshape(const TensorT<S>& x, const Shape& new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  TensorT<S> out = TensorT<S>::from_data(new_shape, x.values());
  if (detail::should_record<S>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    TapeT<S>::active()->record("reshape", [xn, on]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(xn).data();
      const S* go = on->grad.data();
      for (size_t i = 0; i < on->grad.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

// Where mask != 0, replaces x with `value`; elsewhere passes x through.
// The mask broadcasts right-aligned like add() and never receives gradients.
template <class S>
TensorT<S> masked_fill(const TensorT<S>& x, const TensorT<S>& mask, double value) {
  if (!detail::broadcast_ok(x.shape(), mask.shape())) {
    throw ShapeError("masked_fill: cannot broadcast mask " + shape_str(mask.shape()) +
                     " onto " + shape_str(x.shape()));
  }
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  detail::BroadcastMap bmap(x.shape(), mask.shape());
  const S* xp = x.data();
  const S* mp = mask.data();
  S* op = out.data();
  S fill = static_cast<S>(value);
  for (int64_t i = 0; i < x.size(); ++i) {
    op[i] = mp[bmap.map(i)] != S(0) ? fill : xp[i];
  }
  detail::check_finite("masked_fill", out);
  if (detail::should_record<S>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), mn = mask.node(), on = out.node();
    TapeT<S>::active()->record("masked_fill", [xn, mn, on, bmap]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(xn).data();
      const S* go = on->grad.data();
      const S* mv = mn->values.data();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        if (mv[bmap.map(static_cast<int64_t>(i))] == S(0)) gx[i] += go[i];
      }
    });
  }
  return out;
}

// Inverted-scale dropout. rate = 0 is an exact pass-through (same node).
// Kept positions are scaled by 1/(1-rate) so expectations match; the mask is
// drawn from the caller's rng and saved for backward.
template <class S>
TensorT<S> dropout(const TensorT<S>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  auto keep_scale = std::make_shared<std::vector<S>>(static_cast<size_t>(x.size()));
  S inv = static_cast<S>(1.0 / (1.0 - rate));
  const S* xp = x.data();
  S* op = out.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    S m = rng.uniform() >= rate ? inv : S(0);
    (*keep_scale)[static_cast<size_t>(i)] = m;
    op[i] = xp[i] * m;
  }
  if (detail::should_record<S>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    TapeT<S>::active()->record("dropout", [xn, on, keep_scale]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(xn).data();
      const S* go = on->grad.data();
      for (size_t i = 0; i < on->grad.size(); ++i) gx[i] += go[i] * (*keep_scale)[i];
    });
  }
  return out;
}

// Full reduction to a scalar.
template <class S>
TensorT<S> sum(const TensorT<S>& x) {
  S total = S(0);
  const S* xp = x.data();
  for (int64_t i = 0; i < x.size(); ++i) total += xp[i];
  TensorT<S> out = TensorT<S>::scalar(total);
  detail::check_finite("sum", out);
  if (detail::should_record<S>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    TapeT<S>::active()->record("sum", [xn, on]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(xn).data();
      S g = on->grad[0];
      for (size_t i = 0; i < xn->values.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

}  // namespace minis2t
