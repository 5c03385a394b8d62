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

// Integrity-weighted cross-modal completion: shared/private disentanglement,
// surrogate blending, decoding, and the encoder- and decoder-level losses.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ifusion/nn.hpp"

namespace ifusion::completion {

struct DisentangledPair {
  ag::Tensor shared;
  ag::Tensor priv;
};

/// Two parallel encoders splitting an embedding into shared semantics and a
/// private residue.
class Disentangler {
 public:
  Disentangler() = default;
  Disentangler(nn::ParameterStore& store, Modality m, nn::BlockShape shape, int depth);

  DisentangledPair operator()(const ag::Tensor& embedded, Eigen::Index batch, nn::ForwardContext& ctx) const;
  ag::Tensor shared(const ag::Tensor& x, Eigen::Index batch, nn::ForwardContext& ctx) const;
  ag::Tensor priv(const ag::Tensor& x, Eigen::Index batch, nn::ForwardContext& ctx) const;

 private:
  nn::Encoder shared_;
  nn::Encoder private_;
};

/// Sum over (l,a), (l,v), (a,v) of (1/N) ||h_x - h_y||^2.
ag::Tensor similarity_loss(const ag::Tensor& shared_l, const ag::Tensor& shared_a, const ag::Tensor& shared_v,
                           Eigen::Index batch);

/// Sum over modalities of (1/N) ||h_m - centroid||^2; the three-way variant.
ag::Tensor centroid_similarity_loss(const ag::Tensor& shared_l, const ag::Tensor& shared_a,
                                    const ag::Tensor& shared_v, Eigen::Index batch);

/// Squared Frobenius norm of the normalized cross-covariance for one
/// modality, scaled by 1/d^2 and averaged over the batch.
ag::Tensor difference_loss(const DisentangledPair& pair, Eigen::Index batch);

/// Modality average of difference_loss.
ag::Tensor difference_loss(const PerModality<DisentangledPair>& pairs, Eigen::Index batch);

/// similarity + difference.
ag::Tensor encoder_completion_loss(const ag::Tensor& similarity, const ag::Tensor& difference);

/// I * u + (1 - I) * (s1 + s2) per sample; integrity is [N x 1] and is
/// expected to be clamped to [0, 1] already.
ag::Tensor build_surrogate(const ag::Tensor& embedded, const ag::Tensor& integrity, const ag::Tensor& shared_other1,
                           const ag::Tensor& shared_other2, Eigen::Index batch);

/// Scores a pair of [N*T x d] sequences: mean-pool each over time,
/// concatenate to [N x 2d], two GELU hidden layers of width d, scalar out.
class MIDiscriminator {
 public:
  MIDiscriminator() = default;
  MIDiscriminator(nn::ParameterStore& store, const std::string& name, Eigen::Index width);

  /// Scores of pooled rows x_i against y_i: [N x d] each -> [N x 1].
  ag::Tensor score_pooled(const ag::Tensor& x_pooled, const ag::Tensor& y_pooled) const;

 private:
  nn::Linear hidden1_, hidden2_, out_;
};

/// Shuffle of 0..n-1 without fixed points: up to 16 seeded shuffles, falling
/// back to rotation by one. Requires n >= 2.
std::vector<Eigen::Index> derangement(Eigen::Index n, std::uint64_t seed);

/// E_joint[-softplus(-T)] + E_marginal[-softplus(T)] from precomputed scores.
ag::Tensor mi_bound_from_scores(const ag::Tensor& joint_scores, const ag::Tensor& marginal_scores);

/// Jensen-Shannon style lower bound on I(X; Y). Joint pairs are (x_i, y_i);
/// product-of-marginals pairs are (x_i, y_perm(i)).
ag::Tensor mi_lower_bound(const ag::Tensor& x, const ag::Tensor& y, const MIDiscriminator& disc,
                          Eigen::Index batch, std::span<const Eigen::Index> perm);

struct DecoderWeights {
  Real mse_global = 0.5;
  Real mi_global = 0.4;
  Real mse_semantic = 0.3;
  Real mi_semantic = 0.2;
};

struct DecodeResult {
  PerModality<ag::Tensor> reconstructed;  // u~_m
  PerModality<ag::Tensor> re_encoded;     // h~_m^s
  ag::Tensor mse_global, mi_global, mse_semantic, mi_semantic;
  ag::Tensor total;
};

struct DecodeInputs {
  PerModality<ag::Tensor> surrogates;
  PerModality<ag::Tensor> clean_embeddings;  // targets, gradient-stopped
  PerModality<ag::Tensor> clean_semantics;   // targets, gradient-stopped
};

/// Decodes each surrogate, re-encodes it with the modality's shared encoder
/// and scores both depths against the clean targets with MSE and MI terms:
///   L_mse^g = (1/N) sum_m ||u~_m - u_m||^2,  L_mi^g = -sum_m MI(u~_m, u_m)
/// and likewise at the semantic depth; total = weighted sum of the four.
DecodeResult decode_and_validate(const DecodeInputs& inputs, const PerModality<nn::Encoder>& decoders,
                                 const PerModality<Disentangler>& disentanglers,
                                 const PerModality<MIDiscriminator>& global_discriminators,
                                 const PerModality<MIDiscriminator>& semantic_discriminators,
                                 const DecoderWeights& weights, Eigen::Index batch,
                                 std::span<const Eigen::Index> perm, nn::ForwardContext& ctx);

}  // namespace ifusion::completion
