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

#include <cmath>

#include "ifusion/fusion.hpp"
#include "test_support.hpp"

namespace ifusion {
namespace {

using namespace fusion;
using ag::Tensor;

Matrix rows_of(std::initializer_list<std::array<Real, 3>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    m.row(i++) << r[0], r[1], r[2];
  }
  return m;
}

TEST(Dominant, UnanimousArgmax) {
  EXPECT_EQ(select_dominant(rows_of({{0.9, 0.1, 0.1}, {0.9, 0.1, 0.1}})), Modality::kLanguage);
}

TEST(Dominant, MajorityAndTieBreak) {
  // Per-sample dominants {a, a, v}.
  EXPECT_EQ(select_dominant(rows_of({{0.1, 0.8, 0.2}, {0.0, 0.5, 0.4}, {0.1, 0.2, 0.9}})), Modality::kAcoustic);
  // {l, a, a, l}: two each, language wins the tie.
  EXPECT_EQ(select_dominant(rows_of({{0.9, 0.1, 0.1}, {0.1, 0.9, 0.1}, {0.2, 0.7, 0.1}, {0.8, 0.3, 0.1}})),
            Modality::kLanguage);
  // {a, v}: acoustic precedes visual.
  EXPECT_EQ(select_dominant(rows_of({{0.1, 0.9, 0.1}, {0.1, 0.2, 0.9}})), Modality::kAcoustic);
  // Equal scores within a sample go to the earlier modality.
  const auto per = per_sample_dominants(rows_of({{0.5, 0.5, 0.5}, {0.0, 0.7, 0.7}}));
  EXPECT_EQ(per[0], Modality::kLanguage);
  EXPECT_EQ(per[1], Modality::kAcoustic);
}

TEST(Dominant, ClampingMakesOvershootTies) {
  // 1.3 and 1.1 both clamp to 1: tie, earlier modality.
  EXPECT_EQ(per_sample_dominants(rows_of({{0.2, 1.1, 1.3}}))[0], Modality::kAcoustic);
}

TEST(Dominant, InvariantToMonotoneRescaling) {
  const Matrix s = testing::random_matrix(9, 3, 1).cwiseAbs() * 0.3;
  EXPECT_EQ(select_dominant(s), select_dominant(0.5 * s));
  EXPECT_EQ(per_sample_dominants(s), per_sample_dominants(s.array() * 0.5 + 0.1));
}

void set_param(nn::ParameterStore& store, const std::string& name, const Matrix& value) {
  for (auto& p : store.parameters()) {
    if (p.name == name) {
      p.tensor.mutable_value() = value;
      return;
    }
  }
  FAIL() << "no parameter " << name;
}

TEST(FusionLayer, HandComputedSingleHead) {
  nn::ParameterStore store(2);
  const nn::BlockShape shape{2, 1, 4};
  const FusionLayer layer(store, 1, shape);
  const Matrix id = Matrix::Identity(2, 2);
  set_param(store, "fusion.layer1.query", id);
  set_param(store, "fusion.layer1.key.a", id);
  set_param(store, "fusion.layer1.value.a", id);
  set_param(store, "fusion.layer1.key.v", id);
  set_param(store, "fusion.layer1.value.v", Matrix::Zero(2, 2));

  Matrix dom(2, 2), aux(2, 2), prev(2, 2);
  dom << 1.0, 0.0, 0.0, 2.0;
  aux << 0.5, -1.0, 1.5, 0.25;
  prev << 0.1, 0.2, 0.3, 0.4;
  const Tensor out = layer(Tensor::constant(prev), Tensor::constant(dom),
                           {std::pair{Modality::kAcoustic, Tensor::constant(aux)},
                            std::pair{Modality::kVisual, Tensor::constant(aux)}},
                           1);
  Matrix expect = prev;
  for (int i = 0; i < 2; ++i) {
    const Real s0 = (dom(i, 0) * aux(0, 0) + dom(i, 1) * aux(0, 1)) / std::sqrt(2.0);
    const Real s1 = (dom(i, 0) * aux(1, 0) + dom(i, 1) * aux(1, 1)) / std::sqrt(2.0);
    const Real g0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    expect.row(i) += g0 * aux.row(0) + (1.0 - g0) * aux.row(1);
  }
  EXPECT_LT((out.value() - expect).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FusionLayer, ZeroValuesKeepPreviousAndEqualKeysGiveUniformWeights) {
  nn::ParameterStore store(3);
  const nn::BlockShape shape{4, 2, 8};
  const FusionLayer layer(store, 2, shape);
  const Matrix prev = testing::random_matrix(6, 4, 4);
  const Matrix dom = testing::random_matrix(6, 4, 5);
  Matrix aux(6, 4);
  for (int i = 0; i < 6; ++i) aux.row(i) = testing::random_matrix(1, 4, 6 + i / 3);  // constant over time
  std::vector<std::vector<Matrix>> weights;
  layer(Tensor::constant(prev), Tensor::constant(dom),
        {std::pair{Modality::kLanguage, Tensor::constant(aux)}, std::pair{Modality::kVisual, Tensor::constant(aux)}}, 2,
        &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const auto& per_aux : weights) {
    for (const auto& w : per_aux) EXPECT_LT((w.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-12);
  }

  for (const char* m : {"l", "v"}) set_param(store, std::string("fusion.layer2.value.") + m, Matrix::Zero(4, 4));
  const Tensor out = layer(Tensor::constant(prev), Tensor::constant(dom),
                           {std::pair{Modality::kLanguage, Tensor::constant(dom)},
                            std::pair{Modality::kVisual, Tensor::constant(aux)}},
                           2);
  EXPECT_EQ(out.value(), prev);
}

TEST(Refiner, ZeroParametersAreResidualIdentity) {
  nn::ParameterStore store(4);
  const DominantRefiner refiner(store, nn::BlockShape{8, 2, 16});
  for (auto& p : store.parameters()) p.tensor.mutable_value().setZero();
  const Matrix h1 = testing::random_matrix(12, 8, 7);
  nn::ForwardContext ctx;
  const auto [h2, h3] = refiner(Tensor::constant(h1), 3, ctx);
  EXPECT_EQ(h2.value(), h1);
  EXPECT_EQ(h3.value(), h1);
}

TEST(Network, ShapesAttentionNormalizationAndDeterminism) {
  nn::ParameterStore store(5);
  const nn::BlockShape shape{8, 2, 16};
  const FusionNetwork net(store, 4, shape, 2);
  PerModality<Tensor> sur;
  for (int m = 0; m < 3; ++m) sur[m] = Tensor::constant(testing::random_matrix(3 * 4, 8, 10 + m));
  nn::ForwardContext ctx;
  for (Modality dom : kAllModalities) {
    const auto [state, pred] = net(sur, dom, 3, ctx, true);
    EXPECT_EQ(pred.representation.rows(), 3);
    EXPECT_EQ(pred.representation.cols(), 8);
    EXPECT_EQ(pred.score.rows(), 3);
    EXPECT_EQ(pred.score.cols(), 1);
    ASSERT_EQ(state.attention.size(), 3u);
    for (const auto& layer : state.attention) {
      ASSERT_EQ(layer.size(), 2u);
      for (const auto& aux : layer) {
        ASSERT_EQ(aux.size(), 6u);  // N * heads
        for (const auto& w : aux) EXPECT_LT((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);
      }
    }
    const auto again = net(sur, dom, 3, ctx).second;
    EXPECT_EQ(again.score.value(), pred.score.value());
  }
}

TEST(PredictionLoss, Examples) {
  const Vector y = testing::random_vector(5, 8);
  EXPECT_EQ(prediction_loss(Tensor::constant(y), y).item(), 0.0);
  EXPECT_EQ(prediction_loss(Tensor::constant(Matrix::Constant(1, 1, 2.0)), Vector::Zero(1)).item(), 4.0);
  const Vector yhat = testing::random_vector(64, 9), yy = testing::random_vector(64, 10);
  Real acc = 0.0;
  for (int k = 0; k < 64; ++k) acc += (yhat(k) - yy(k)) * (yhat(k) - yy(k));
  EXPECT_NEAR(prediction_loss(Tensor::constant(yhat), yy).item(), acc / 64.0, 1e-12);
  EXPECT_LT(testing::gradient_error([&](const auto& x) { return prediction_loss(x[0], yy); }, {Matrix(yhat)}), 1e-6);
}

}  // namespace
}  // namespace ifusion
