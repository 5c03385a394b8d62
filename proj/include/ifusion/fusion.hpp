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

#pragma once

#include <vector>

#include "ifusion/nn.hpp"

namespace ifusion::fusion {

/// Per-sample argmax of clamped scores ([N x 3], columns l, a, v); ties go
/// to the earlier modality.
std::vector<Modality> per_sample_dominants(const Matrix& scores);

/// Batch-majority of the per-sample dominants, ties resolved l > a > v.
Modality select_dominant(const Matrix& scores);

/// Two stacked single-layer self-attention encoders over the dominant stream.
class DominantRefiner {
 public:
  DominantRefiner() = default;
  DominantRefiner(nn::ParameterStore& store, nn::BlockShape shape);

  /// Returns {h_dom^2, h_dom^3}.
  std::pair<ag::Tensor, ag::Tensor> operator()(const ag::Tensor& h1, Eigen::Index batch,
                                               nn::ForwardContext& ctx) const;

 private:
  nn::EncoderLayer second_, third_;
};

/// One fusion step: queries come from the dominant stream, keys and values
/// from each auxiliary modality through modality-specific projections, and
///   h_fuse^j = h_fuse^{j-1} + sum_m softmax(Q K_m^T / sqrt(d_k)) V_m.
/// Heads are concatenated; there is no output projection.
class FusionLayer {
 public:
  FusionLayer() = default;
  FusionLayer(nn::ParameterStore& store, int layer, nn::BlockShape shape);

  ag::Tensor operator()(const ag::Tensor& previous, const ag::Tensor& dominant,
                        const std::array<std::pair<Modality, ag::Tensor>, 2>& auxiliaries, Eigen::Index batch,
                        std::vector<std::vector<Matrix>>* weights = nullptr) const;

 private:
  ag::Tensor query_;
  PerModality<ag::Tensor> key_;
  PerModality<ag::Tensor> value_;
  int heads_ = 1;
};

struct FusionState {
  Modality dominant = Modality::kLanguage;
  std::array<ag::Tensor, 3> dominant_layers;  // h_dom^1..3
  std::array<ag::Tensor, 4> fused_layers;     // h_fuse^0..3
  /// attention[j][aux] holds the N*heads [T x T] softmax matrices of layer j+1.
  std::vector<std::vector<std::vector<Matrix>>> attention;
};

struct PredictionOutput {
  ag::Tensor representation;  // [N x d]
  ag::Tensor score;           // [N x 1]
};

/// Dominant-vs-fused cross-attention predictor with learnable anchor rows
/// prepended to both streams; reads the anchor position of the output.
class Predictor {
 public:
  Predictor() = default;
  Predictor(nn::ParameterStore& store, nn::BlockShape shape, int depth);

  PredictionOutput operator()(const ag::Tensor& dominant, const ag::Tensor& fused, Eigen::Index batch,
                              nn::ForwardContext& ctx) const;

 private:
  ag::Tensor dominant_token_;
  ag::Tensor fused_token_;
  std::vector<nn::CrossLayer> layers_;
  nn::LayerNorm norm_;
  nn::Linear head_;
};

/// Full fusion stack: refiner, three fusion layers over a learnable base
/// h_fuse^0, and the predictor. Fusion layer j queries h_dom^j, so the
/// number of fusion layers is tied to the three dominant depths.
class FusionNetwork {
 public:
  FusionNetwork() = default;
  FusionNetwork(nn::ParameterStore& store, Eigen::Index steps, nn::BlockShape shape, int predictor_depth);

  /// surrogates[m] are [N*T x d]; the dominant modality is chosen by the caller.
  std::pair<FusionState, PredictionOutput> operator()(const PerModality<ag::Tensor>& surrogates, Modality dominant,
                                                      Eigen::Index batch, nn::ForwardContext& ctx,
                                                      bool keep_attention = false) const;

 private:
  ag::Tensor base_;  // h_fuse^0, [T x d]
  DominantRefiner refiner_;
  std::array<FusionLayer, 3> layers_;
  Predictor predictor_;
};

/// (1/N) sum_k (y_hat_k - y_k)^2.
ag::Tensor prediction_loss(const ag::Tensor& predicted, const Vector& labels);

}  // namespace ifusion::fusion
