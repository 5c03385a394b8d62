// Copyright 2026 The ifusion Authors
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

// Reverse-mode automatic differentiation over dense matrices.
//
// The graph is built dynamically: every op returns a Tensor holding its value
// and, when any input requires a gradient and grad mode is on, a closure that
// pushes the output gradient back into its inputs. Ops are coarse (linear,
// layer norm, multi-head attention, ...) with hand-written backward passes so
// a transformer step touches a few hundred nodes rather than millions.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ifusion/common.hpp"

namespace ifusion::ag {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Matrix&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor leaf(Matrix value, bool requires_grad);
  static Tensor scalar(Real v);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  /// Direct write access, for optimizers and checkpoint loading only.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Real item() const;

  /// Same value, cut from the graph.
  Tensor detach() const { return constant(node_->value); }

  /// Seeds d(self)/d(self) = 1 and propagates. Requires a 1x1 tensor.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph construction for its lifetime (teacher passes, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise and linear algebra.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
/// a * mul + shift, elementwise.
Tensor affine(const Tensor& a, Real mul, Real shift = 0.0);
Tensor matmul(const Tensor& a, const Tensor& b);
/// x W + b with b a [1 x out] row broadcast over rows; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Nonlinearities.
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
/// Gradient passes through where lo <= x <= hi.
Tensor clamp(const Tensor& x, Real lo, Real hi);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = 1e-5);

/// Inverted dropout with a counter-based mask keyed by `key`. Identity when
/// rate == 0.
Tensor dropout(const Tensor& x, Real rate, std::uint64_t key);

/// Batched multi-head scaled dot-product attention.
///
/// q is [N*Tq x D], k and v are [N*Tk x D]; D must be divisible by `heads`.
/// Head h uses columns [h*D/heads, (h+1)*D/heads) of each input and writes the
/// same column range of the output. When `weights` is non-null it receives the
/// N*heads softmax matrices [Tq x Tk], sample-major.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Eigen::Index batch,
                 int heads, std::vector<Matrix>* weights = nullptr);

// Sequence layout helpers over [N*T x d] stacks.
Tensor prepend_rows(const Tensor& x, const Tensor& token, Eigen::Index batch);
Tensor slice_time(const Tensor& x, Eigen::Index batch, Eigen::Index start, Eigen::Index len);
/// out_n = W x_n for every sample block x_n; W is [T_out x T_in].
Tensor time_mix(const Tensor& x, const Tensor& w, Eigen::Index batch);
/// [T x d] repeated for N samples.
Tensor tile_rows(const Tensor& x, Eigen::Index batch);
/// Mean over the time axis: [N*T x d] -> [N x d].
Tensor mean_time(const Tensor& x, Eigen::Index batch);
/// Scales sample block n by w(n, 0); w is [N x 1].
Tensor scale_samples(const Tensor& x, const Tensor& w, Eigen::Index batch);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, std::span<const Eigen::Index> rows);
Tensor column(const Tensor& x, Eigen::Index col);

// Reductions to 1x1.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_squares(const Tensor& x);

/// Mean over samples of (1/d^2) * ||S_n^T P_n||_F^2 where S_n and P_n are
/// the per-sample blocks after centering over time and scaling every column
/// to unit L2 norm (norm + eps in the denominator).
Tensor cross_covariance_penalty(const Tensor& shared, const Tensor& priv, Eigen::Index batch,
                                Real eps = 1e-8);

}  // namespace ifusion::ag
