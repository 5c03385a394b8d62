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
#include <set>

#include "ifusion/completion.hpp"
#include "test_support.hpp"

namespace ifusion {
namespace {

using namespace completion;
using ag::Tensor;

Tensor constant(const Matrix& m) { return Tensor::constant(m); }

void zero_parameters(nn::ParameterStore& store) {
  for (auto& p : store.parameters()) p.tensor.mutable_value().setZero();
}

TEST(Disentangler, ShapesAndDeterminism) {
  nn::ParameterStore store(1);
  const Disentangler d(store, Modality::kAcoustic, nn::BlockShape{16, 2, 32}, 1);
  nn::ForwardContext ctx;
  const Tensor x = constant(testing::random_matrix(8, 16, 2));
  const auto a = d(x, 1, ctx);
  const auto b = d(x, 1, ctx);
  EXPECT_EQ(a.shared.rows(), 8);
  EXPECT_EQ(a.priv.cols(), 16);
  EXPECT_EQ(a.shared.value(), b.shared.value());
  EXPECT_EQ(a.priv.value(), b.priv.value());
}

TEST(Similarity, Examples) {
  const Matrix x = testing::random_matrix(2, 3, 3);
  EXPECT_EQ(similarity_loss(constant(x), constant(x), constant(x), 1).item(), 0.0);
  // Only l differs from a; l-v and a-v pairs are then equal too unless v = a.
  const Matrix a = x.array() - 1.0;
  EXPECT_EQ(similarity_loss(constant(x), constant(a), constant(x), 1).item(), 12.0);
  // The single-pair case: l - a = 1 everywhere, l = v, so l-a and a-v both count 6.
  const Tensor s = ag::affine(ag::sum_squares(ag::sub(constant(x), constant(a))), 1.0);
  EXPECT_EQ(s.item(), 6.0);
}

TEST(Similarity, TripleLoopOracle) {
  const Eigen::Index n = 3, t = 4, d = 5;
  const Matrix l = testing::random_matrix(n * t, d, 4), a = testing::random_matrix(n * t, d, 5),
               v = testing::random_matrix(n * t, d, 6);
  const Matrix* mats[3] = {&l, &a, &v};
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  Real total = 0.0;
  for (const auto& p : pairs) {
    Real acc = 0.0;
    for (Eigen::Index i = 0; i < n * t; ++i)
      for (Eigen::Index j = 0; j < d; ++j) acc += std::pow((*mats[p[0]])(i, j) - (*mats[p[1]])(i, j), 2);
    total += acc / static_cast<Real>(n);
  }
  EXPECT_NEAR(similarity_loss(constant(l), constant(a), constant(v), n).item(), total, 1e-10);
}

Real reference_difference(const Matrix& s, const Matrix& p, Eigen::Index n) {
  const Eigen::Index t = s.rows() / n, d = s.cols();
  Real total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Matrix sn = s.middleRows(k * t, t), pn = p.middleRows(k * t, t);
    for (Matrix* m : {&sn, &pn}) {
      for (Eigen::Index c = 0; c < d; ++c) {
        Real mean = 0.0;
        for (Eigen::Index r = 0; r < t; ++r) mean += (*m)(r, c);
        mean /= static_cast<Real>(t);
        Real norm = 0.0;
        for (Eigen::Index r = 0; r < t; ++r) norm += std::pow((*m)(r, c) - mean, 2);
        norm = std::sqrt(norm);
        for (Eigen::Index r = 0; r < t; ++r) (*m)(r, c) = ((*m)(r, c) - mean) / (norm + 1e-8);
      }
    }
    Real f = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        Real c = 0.0;
        for (Eigen::Index r = 0; r < t; ++r) c += sn(r, i) * pn(r, j);
        f += c * c;
      }
    }
    total += f / static_cast<Real>(d * d);
  }
  return total / static_cast<Real>(n);
}

TEST(Difference, IdenticalPairGivesOneOverD) {
  const Matrix x = testing::random_matrix(8, 4, 7);
  const DisentangledPair pair{constant(x), constant(x)};
  // Diagonal of the normalized cross-covariance is 1; the off-diagonal
  // entries are the column correlations, so compare with the direct product.
  const Real direct = reference_difference(x, x, 1);
  EXPECT_NEAR(difference_loss(pair, 1).item(), direct, 1e-10);
  // Orthonormal-after-centering columns make the off-diagonals vanish.
  Matrix q(4, 2);
  q << 1, 1, -1, 1, 1, -1, -1, -1;
  EXPECT_NEAR(difference_loss(DisentangledPair{constant(q), constant(q)}, 1).item(), 1.0 / 2.0, 1e-7);  // eps in the norms
}

TEST(Difference, OrthogonalColumnSpacesGiveZero) {
  Matrix s(4, 1), p(4, 1);
  s << 1, -1, 1, -1;
  p << 1, 1, -1, -1;
  EXPECT_NEAR(difference_loss(DisentangledPair{constant(s), constant(p)}, 1).item(), 0.0, 1e-14);
}

TEST(Difference, ElementwiseOracleAndRescaling) {
  const Matrix s = testing::random_matrix(3 * 8, 4, 8), p = testing::random_matrix(3 * 8, 4, 9);
  const Real value = difference_loss(DisentangledPair{constant(s), constant(p)}, 3).item();
  EXPECT_NEAR(value, reference_difference(s, p, 3), 1e-10);
  const Real scaled = difference_loss(DisentangledPair{constant(3.7 * s), constant(p)}, 3).item();
  EXPECT_NEAR(scaled, value, 1e-8);
}

TEST(EncoderCompletion, IsSum) {
  EXPECT_EQ(encoder_completion_loss(Tensor::scalar(0.0), Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(encoder_completion_loss(Tensor::scalar(0.5), Tensor::scalar(0.25)).item(), 0.75);
  const Matrix l = testing::random_matrix(8, 3, 10), a = testing::random_matrix(8, 3, 11),
               v = testing::random_matrix(8, 3, 12);
  const PerModality<DisentangledPair> pairs = {DisentangledPair{constant(l), constant(a)},
                                               DisentangledPair{constant(a), constant(v)},
                                               DisentangledPair{constant(v), constant(l)}};
  const Real sim = similarity_loss(constant(l), constant(a), constant(v), 2).item();
  const Real diff = (reference_difference(l, a, 2) + reference_difference(a, v, 2) + reference_difference(v, l, 2)) / 3.0;
  const Real total =
      encoder_completion_loss(similarity_loss(constant(l), constant(a), constant(v), 2), difference_loss(pairs, 2)).item();
  EXPECT_NEAR(total, sim + diff, 1e-12);
}

TEST(Surrogate, BlendEndpointsAndExample) {
  const Eigen::Index n = 2, t = 3, d = 4;
  const Matrix u = testing::random_matrix(n * t, d, 13), s1 = testing::random_matrix(n * t, d, 14),
               s2 = testing::random_matrix(n * t, d, 15);
  const auto at = [&](Real w) {
    return build_surrogate(constant(u), constant(Matrix::Constant(n, 1, w)), constant(s1), constant(s2), n).value();
  };
  EXPECT_EQ(at(1.0), u);
  EXPECT_EQ(at(0.0), s1 + s2);
  const Matrix j = Matrix::Ones(n * t, d);
  const Matrix out =
      build_surrogate(constant(4.0 * j), constant(Matrix::Constant(n, 1, 0.25)), constant(j), constant(j), n).value();
  EXPECT_EQ(out, 2.5 * j);
}

TEST(Surrogate, MonotoneInIntegrityTowardsOwnEmbedding) {
  const Matrix u = testing::random_matrix(4, 3, 16), s1 = testing::random_matrix(4, 3, 17),
               s2 = testing::random_matrix(4, 3, 18);
  Real previous = std::numeric_limits<Real>::infinity();
  for (int k = 0; k <= 10; ++k) {
    const Matrix out =
        build_surrogate(constant(u), constant(Matrix::Constant(1, 1, k / 10.0)), constant(s1), constant(s2), 1).value();
    const Real dist = (out - u).norm();
    EXPECT_LE(dist, previous + 1e-12);
    previous = dist;
  }
  EXPECT_NEAR(previous, 0.0, 1e-12);
}

TEST(MutualInformation, ZeroCriticGivesMinusTwoLnTwo) {
  nn::ParameterStore store(4);
  const MIDiscriminator disc(store, "mi", 6);
  zero_parameters(store);
  const auto perm = derangement(5, 3);
  for (std::uint64_t seed : {1, 2, 3}) {
    const Tensor x = constant(testing::random_matrix(5 * 4, 6, seed, 10.0));
    const Tensor y = constant(testing::random_matrix(5 * 4, 6, seed + 50));
    EXPECT_NEAR(mi_lower_bound(x, y, disc, 5, perm).item(), -2.0 * std::log(2.0), 1e-6);
  }
}

TEST(MutualInformation, IdealCriticApproachesZero) {
  const Tensor joint = constant(Matrix::Constant(4, 1, 200.0));
  const Tensor marginal = constant(Matrix::Constant(4, 1, -200.0));
  EXPECT_NEAR(mi_bound_from_scores(joint, marginal).item(), 0.0, 1e-12);
}

TEST(MutualInformation, ScalarLoopOracle) {
  nn::ParameterStore store(5);
  const MIDiscriminator disc(store, "mi", 3);
  const Eigen::Index n = 8, t = 2;
  const Matrix x = testing::random_matrix(n * t, 3, 19), y = testing::random_matrix(n * t, 3, 20);
  const auto perm = derangement(n, 4);
  const Real got = mi_lower_bound(constant(x), constant(y), disc, n, perm).item();

  const auto param = [&](const std::string& name) { return store.find(name)->tensor.value(); };
  const auto gelu = [](Real v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); };
  const auto softplus = [](Real v) { return std::log1p(std::exp(v)); };
  const auto pooled = [&](const Matrix& m, Eigen::Index i) {
    std::vector<Real> out(3, 0.0);
    for (int c = 0; c < 3; ++c) out[c] = (m(i * t, c) + m(i * t + 1, c)) / 2.0;
    return out;
  };
  const auto score = [&](std::vector<Real> a, const std::vector<Real>& b) {
    a.insert(a.end(), b.begin(), b.end());
    const Matrix w1 = param("mi.hidden1.weight"), b1 = param("mi.hidden1.bias");
    const Matrix w2 = param("mi.hidden2.weight"), b2 = param("mi.hidden2.bias");
    const Matrix w3 = param("mi.out.weight"), b3 = param("mi.out.bias");
    std::vector<Real> h1(3), h2(3);
    for (int o = 0; o < 3; ++o) {
      Real acc = b1(0, o);
      for (int i = 0; i < 6; ++i) acc += a[i] * w1(i, o);
      h1[o] = gelu(acc);
    }
    for (int o = 0; o < 3; ++o) {
      Real acc = b2(0, o);
      for (int i = 0; i < 3; ++i) acc += h1[i] * w2(i, o);
      h2[o] = gelu(acc);
    }
    Real acc = b3(0, 0);
    for (int i = 0; i < 3; ++i) acc += h2[i] * w3(i, 0);
    return acc;
  };
  Real joint = 0.0, marginal = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    joint += -softplus(-score(pooled(x, i), pooled(y, i)));
    marginal += -softplus(score(pooled(x, i), pooled(y, perm[i])));
  }
  EXPECT_NEAR(got, joint / n + marginal / n, 1e-8);
  EXPECT_THROW(mi_lower_bound(constant(x.topRows(2)), constant(y.topRows(2)), disc, 1, std::vector<Eigen::Index>{0}),
               ShapeError);
}

TEST(Derangement, HasNoFixedPoints) {
  for (Eigen::Index n = 2; n < 40; ++n) {
    const auto p = derangement(n, static_cast<std::uint64_t>(n));
    std::set<Eigen::Index> seen(p.begin(), p.end());
    EXPECT_EQ(static_cast<Eigen::Index>(seen.size()), n);
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NE(p[i], i);
  }
  EXPECT_EQ(derangement(9, 1), derangement(9, 1));
  EXPECT_THROW(derangement(1, 0), ShapeError);
}

struct DecoderRig {
  nn::ParameterStore store{6};
  nn::BlockShape shape{6, 2, 12};
  PerModality<nn::Encoder> decoders;
  PerModality<Disentangler> dis;
  PerModality<MIDiscriminator> global, semantic;

  DecoderRig() {
    for (Modality m : kAllModalities) {
      const auto mi = index_of(m);
      const std::string s(short_name(m));
      decoders[mi] = nn::Encoder(store, "decoder." + s, nn::ParamGroup::kDecoder, shape, 1);
      dis[mi] = Disentangler(store, m, shape, 1);
      global[mi] = MIDiscriminator(store, "mi.global." + s, shape.width);
      semantic[mi] = MIDiscriminator(store, "mi.semantic." + s, shape.width);
    }
  }
  void zero_decoders() {
    for (auto& p : store.parameters()) {
      if (p.group == nn::ParamGroup::kDecoder) p.tensor.mutable_value().setZero();
    }
  }
};

DecodeInputs random_inputs(Eigen::Index n, Eigen::Index t, Eigen::Index d, std::uint64_t seed) {
  DecodeInputs in;
  for (int m = 0; m < 3; ++m) {
    in.surrogates[m] = constant(testing::random_matrix(n * t, d, seed + m));
    in.clean_embeddings[m] = constant(testing::random_matrix(n * t, d, seed + 10 + m));
    in.clean_semantics[m] = constant(testing::random_matrix(n * t, d, seed + 20 + m));
  }
  return in;
}

TEST(Decoder, IdentityDecoderOnCleanInputHasZeroGlobalMse) {
  DecoderRig rig;
  rig.zero_decoders();  // pre-norm residual blocks with zero weights are the identity
  DecodeInputs in = random_inputs(3, 4, 6, 30);
  in.surrogates = in.clean_embeddings;
  nn::ForwardContext ctx;
  const auto perm = derangement(3, 1);
  const auto r = decode_and_validate(in, rig.decoders, rig.dis, rig.global, rig.semantic, DecoderWeights{}, 3, perm, ctx);
  EXPECT_NEAR(r.mse_global.item(), 0.0, 1e-20);
}

TEST(Decoder, WeightedComposition) {
  DecoderRig rig;
  const DecodeInputs in = random_inputs(4, 4, 6, 40);
  nn::ForwardContext ctx;
  const auto perm = derangement(4, 2);
  const auto r = decode_and_validate(in, rig.decoders, rig.dis, rig.global, rig.semantic, DecoderWeights{}, 4, perm, ctx);
  const Real a = r.mse_global.item(), b = r.mi_global.item(), c = r.mse_semantic.item(), d = r.mi_semantic.item();
  EXPECT_NEAR(r.total.item(), 0.5 * a + 0.4 * b + 0.3 * c + 0.2 * d, 1e-10);

  // Recompose the global MSE from the reconstructions directly.
  Real mse = 0.0;
  for (int m = 0; m < 3; ++m) mse += (r.reconstructed[m].value() - in.clean_embeddings[m].value()).squaredNorm() / 4.0;
  EXPECT_NEAR(a, mse, 1e-10);
  Real mi = 0.0;
  for (int m = 0; m < 3; ++m) mi -= mi_lower_bound(r.reconstructed[m], in.clean_embeddings[m], rig.global[m], 4, perm).item();
  EXPECT_NEAR(b, mi, 1e-10);
}

TEST(Decoder, MissingTargetsAreRejected) {
  DecoderRig rig;
  DecodeInputs in = random_inputs(2, 4, 6, 50);
  in.clean_semantics[1] = Tensor();
  nn::ForwardContext ctx;
  const auto perm = derangement(2, 1);
  EXPECT_THROW(decode_and_validate(in, rig.decoders, rig.dis, rig.global, rig.semantic, DecoderWeights{}, 2, perm, ctx),
               ConfigError);
}

// Finite-difference checks at T=4, d=6, N=4.
constexpr Eigen::Index kN = 4, kT = 4, kD = 6;

TEST(Gradients, SimilarityAndDifference) {
  const std::vector<Matrix> in = {testing::random_matrix(kN * kT, kD, 60), testing::random_matrix(kN * kT, kD, 61),
                                  testing::random_matrix(kN * kT, kD, 62)};
  EXPECT_LT(testing::gradient_error([](const auto& x) { return similarity_loss(x[0], x[1], x[2], kN); }, in), 1e-3);
  EXPECT_LT(testing::gradient_error(
                [](const auto& x) { return difference_loss(DisentangledPair{x[0], x[1]}, kN); }, {in[0], in[1]}),
            1e-3);
}

TEST(Gradients, MutualInformationAndDecoderMse) {
  DecoderRig rig;
  const auto perm = derangement(kN, 7);
  const std::vector<Matrix> in = {testing::random_matrix(kN * kT, kD, 63), testing::random_matrix(kN * kT, kD, 64)};
  EXPECT_LT(testing::gradient_error(
                [&](const auto& x) { return mi_lower_bound(x[0], x[1], rig.global[0], kN, perm); }, in),
            1e-3);
  const DecodeInputs base = random_inputs(kN, kT, kD, 70);
  for (int which = 0; which < 2; ++which) {
    const auto f = [&](const std::vector<Tensor>& x) {
      DecodeInputs d = base;
      d.surrogates[0] = x[0];
      nn::ForwardContext ctx;
      const auto r = decode_and_validate(d, rig.decoders, rig.dis, rig.global, rig.semantic, DecoderWeights{}, kN, perm, ctx);
      return which == 0 ? r.mse_global : r.mse_semantic;
    };
    EXPECT_LT(testing::gradient_error(f, {base.surrogates[0].value()}), 1e-3) << which;
  }
}

}  // namespace
}  // namespace ifusion
