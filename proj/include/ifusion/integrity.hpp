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

#include <string>

#include "ifusion/data.hpp"
#include "ifusion/nn.hpp"

namespace ifusion::integrity {

/// Projects a corrupted [T_m x d_m] modality into the shared [T x d] space:
/// feature projection, learned time resampling T_m -> T, a prepended
/// learnable anchor row, then a self-attention encoder. The anchor row is
/// dropped from the output.
class ModalityEmbedding {
 public:
  ModalityEmbedding() = default;
  ModalityEmbedding(nn::ParameterStore& store, Modality m, data::ModalityDims input, Eigen::Index steps,
                    nn::BlockShape shape, int depth);

  /// features: [N*T_m x d_m] -> [N*T x d].
  ag::Tensor operator()(const ag::Tensor& features, Eigen::Index batch, nn::ForwardContext& ctx) const;

  Eigen::Index steps() const { return steps_; }

 private:
  data::ModalityDims input_{};
  Eigen::Index steps_ = 0;
  nn::Linear projection_;
  ag::Tensor resample_;  // [T x T_m]
  ag::Tensor anchor_;    // [1 x d]
  nn::Encoder encoder_;
};

/// Reads a scalar integrity score off a prepended learnable token after a
/// self-attention encoder and a linear head. Output is raw (unclamped).
class IntegrityEstimator {
 public:
  IntegrityEstimator() = default;
  IntegrityEstimator(nn::ParameterStore& store, Modality m, nn::BlockShape shape, int depth);

  /// embedded: [N*T x d] -> [N x 1].
  ag::Tensor operator()(const ag::Tensor& embedded, Eigen::Index batch, nn::ForwardContext& ctx) const;

 private:
  ag::Tensor token_;
  nn::Encoder encoder_;
  nn::LayerNorm norm_;
  nn::Linear head_;
};

/// (1/N) sum_k ||pred_k - label_k||^2 over [N x 3] score matrices.
ag::Tensor integrity_loss(const ag::Tensor& predicted, const Matrix& labels);

}  // namespace ifusion::integrity
