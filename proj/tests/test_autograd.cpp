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

#include <gtest/gtest.h>

#include "ifusion/autograd.hpp"
#include "test_support.hpp"

namespace ifusion {
namespace {

using ag::Tensor;
using testing::gradient_error;
using testing::random_matrix;
using Inputs = std::vector<Tensor>;

// Projects onto a fixed random direction so every output entry matters.
Tensor reduce(const Tensor& t, std::uint64_t seed = 99) {
  return ag::sum(ag::hadamard(t, Tensor::constant(random_matrix(t.rows(), t.cols(), seed))));
}

constexpr Real kTol = 1e-6;

TEST(Autograd, Elementwise) {
  const Matrix a = random_matrix(3, 4, 1), b = random_matrix(3, 4, 2);
  EXPECT_LT(gradient_error([](const Inputs& x) { return reduce(ag::add(x[0], x[1])); }, {a, b}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return reduce(ag::sub(x[0], x[1])); }, {a, b}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return reduce(ag::hadamard(x[0], x[1])); }, {a, b}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return reduce(ag::affine(x[0], -2.5, 0.3)); }, {a}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return reduce(ag::gelu(x[0])); }, {a}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return reduce(ag::softplus(x[0])); }, {a}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return ag::sum_squares(x[0]); }, {a}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& x) { return ag::mean(x[0]); }, {a}), kTol);
}

TEST(Autograd, ClampPassesGradientInsideOnly) {
  Matrix x(1, 3);
  x << -0.5, 0.4, 1.7;
  const Tensor t = Tensor::leaf(x, true);
  ag::sum(ag::clamp(t, 0.0, 1.0)).backward();
  EXPECT_DOUBLE_EQ(t.grad()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(t.grad()(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(t.grad()(0, 2), 0.0);
}

TEST(Autograd, LinearAlgebra) {
  const Matrix x = random_matrix(5, 3, 3), w = random_matrix(3, 4, 4), b = random_matrix(1, 4, 5);
  EXPECT_LT(gradient_error([](const Inputs& v) { return reduce(ag::matmul(v[0], v[1])); }, {x, w}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& v) { return reduce(ag::linear(v[0], v[1], v[2])); }, {x, w, b}), kTol);
  EXPECT_LT(gradient_error([](const Inputs& v) { return reduce(ag::linear(v[0], v[1], Tensor())); }, {x, w}), kTol);
}

TEST(Autograd, LayerNorm) {
  const Matrix x = random_matrix(4, 6, 6), g = random_matrix(1, 6, 7), b = random_matrix(1, 6, 8);
  EXPECT_LT(gradient_error([](const Inputs& v) { return reduce(ag::layer_norm(v[0], v[1], v[2])); }, {x, g, b}), 1e-5);
}

TEST(Autograd, AttentionGradientsAndRowSums) {
  const Eigen::Index n = 2, tq = 3, tk = 4, d = 6;
  const Matrix q = random_matrix(n * tq, d, 9), k = random_matrix(n * tk, d, 10), v = random_matrix(n * tk, d, 11);
  EXPECT_LT(gradient_error([&](const Inputs& x) { return reduce(ag::attention(x[0], x[1], x[2], n, 2)); }, {q, k, v}),
            1e-5);
  std::vector<Matrix> weights;
  ag::attention(Tensor::constant(q), Tensor::constant(k), Tensor::constant(v), n, 2, &weights);
  ASSERT_EQ(weights.size(), static_cast<std::size_t>(n * 2));
  for (const auto& w : weights) {
    ASSERT_EQ(w.rows(), tq);
    ASSERT_EQ(w.cols(), tk);
    for (Eigen::Index r = 0; r < w.rows(); ++r) EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(Autograd, AttentionMatchesDirectFormula) {
  const Eigen::Index t = 3, d = 4;
  const Matrix q = random_matrix(t, d, 12), k = random_matrix(t, d, 13), v = random_matrix(t, d, 14);
  const Matrix out = ag::attention(Tensor::constant(q), Tensor::constant(k), Tensor::constant(v), 1, 1).value();
  Matrix scores = q * k.transpose() / std::sqrt(static_cast<Real>(d));
  for (Eigen::Index r = 0; r < t; ++r) {
    scores.row(r) = (scores.row(r).array() - scores.row(r).maxCoeff()).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  EXPECT_LT((out - scores * v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autograd, SequenceHelpers) {
  const Eigen::Index n = 2, t = 3, d = 4;
  const Matrix x = random_matrix(n * t, d, 15), tok = random_matrix(1, d, 16), mix = random_matrix(5, t, 17);
  const Matrix w = random_matrix(n, 1, 18), y = random_matrix(n * t, 2, 19);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::prepend_rows(v[0], v[1], n)); }, {x, tok}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::slice_time(v[0], n, 1, 2)); }, {x}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::time_mix(v[0], v[1], n)); }, {x, mix}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::tile_rows(v[0], n)); }, {tok}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::mean_time(v[0], n)); }, {x}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::scale_samples(v[0], v[1], n)); }, {x, w}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::concat_cols(v[0], v[1])); }, {x, y}), kTol);
  const std::vector<Eigen::Index> rows = {1, 0, 1};
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::gather_rows(v[0], rows)); }, {w}), kTol);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return reduce(ag::column(v[0], 2)); }, {x}), kTol);
}

TEST(Autograd, SequenceHelperValues) {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;  // two samples of two steps
  const Tensor t = Tensor::constant(x);
  EXPECT_EQ(ag::mean_time(t, 2).value(), (Matrix(2, 1) << 1.5, 3.5).finished());
  const Matrix p = ag::prepend_rows(t, Tensor::constant(Matrix::Constant(1, 1, 9.0)), 2).value();
  EXPECT_EQ(p, (Matrix(6, 1) << 9, 1, 2, 9, 3, 4).finished());
  EXPECT_EQ(ag::slice_time(t, 2, 1, 1).value(), (Matrix(2, 1) << 2, 4).finished());
}

TEST(Autograd, CrossCovariancePenalty) {
  const Eigen::Index n = 3, t = 4, d = 5;
  const Matrix s = random_matrix(n * t, d, 20), p = random_matrix(n * t, d, 21);
  EXPECT_LT(gradient_error([&](const Inputs& v) { return ag::cross_covariance_penalty(v[0], v[1], n); }, {s, p}), 1e-5);
}

TEST(Autograd, DropoutIsKeyedAndInverted) {
  const Matrix x = Matrix::Ones(50, 40);
  const Matrix a = ag::dropout(Tensor::constant(x), 0.25, 7).value();
  const Matrix b = ag::dropout(Tensor::constant(x), 0.25, 7).value();
  const Matrix c = ag::dropout(Tensor::constant(x), 0.25, 8).value();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Real v = a.data()[i];
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
  }
  const Real kept = (a.array() != 0.0).cast<Real>().mean();
  EXPECT_NEAR(kept, 0.75, 0.05);
  EXPECT_EQ(ag::dropout(Tensor::constant(x), 0.0, 7).value(), x);
}

TEST(Autograd, NoGradGuardBuildsNoGraph) {
  const Tensor a = Tensor::leaf(random_matrix(2, 2, 22), true);
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    const Tensor y = ag::affine(a, 2.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(ag::grad_enabled());
}

TEST(Autograd, SharedSubgraphAccumulates) {
  // y = sum(x * x) via two uses of x: dy/dx = 2x.
  const Matrix x = random_matrix(3, 2, 23);
  const Tensor t = Tensor::leaf(x, true);
  ag::sum(ag::hadamard(t, t)).backward();
  EXPECT_LT((t.grad() - 2.0 * x).cwiseAbs().maxCoeff(), 1e-14);
}

}  // namespace
}  // namespace ifusion
