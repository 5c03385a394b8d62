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

#include <cstdint>
#include <map>
#include <string>

#include "ifusion/completion.hpp"
#include "ifusion/data.hpp"
#include "ifusion/fusion.hpp"
#include "ifusion/integrity.hpp"
#include "ifusion/missingness.hpp"
#include "ifusion/nn.hpp"

namespace ifusion {

enum class SimilarityMode { kPairwiseMse, kPairwiseMi, kThreeWay };

std::string_view similarity_mode_name(SimilarityMode m);
SimilarityMode parse_similarity_mode(std::string_view name);

struct ModelConfig {
  PerModality<data::ModalityDims> input_dims = {data::ModalityDims{8, 24}, data::ModalityDims{8, 8},
                                                data::ModalityDims{8, 16}};
  Eigen::Index steps = 8;    // T
  Eigen::Index width = 128;  // d
  int heads = 4;
  /// Feed-forward width; 0 means 4 * width.
  Eigen::Index feedforward = 0;
  Real dropout = 0.1;
  int embed_depth = 2;
  int integrity_depth = 2;
  int disentangle_depth = 2;
  int decoder_depth = 2;
  int predictor_depth = 2;
  /// Fill value of the language unknown vector.
  Real unknown_value = 0.0;
  SimilarityMode similarity = SimilarityMode::kPairwiseMse;
  std::uint64_t init_seed = 1112;
  /// Blend by estimated integrity; false forces the weight to 1 in every
  /// pass, training and inference alike.
  bool integrity_weighting = true;

  nn::BlockShape block_shape() const { return {width, heads, feedforward > 0 ? feedforward : 4 * width}; }
  void validate() const;
};

/// Balance factors of the overall objective.
struct LossWeights {
  Real alpha = 0.9;  // integrity
  Real beta = 0.4;   // completion
  Real sigma = 1.0;  // prediction
  completion::DecoderWeights decoder;
};

/// Named scalar values of every loss term of one step.
struct LossReport {
  Real integrity = 0.0;
  Real similarity = 0.0;
  Real difference = 0.0;
  Real rec_enc = 0.0;
  Real mse_global = 0.0;
  Real mi_global = 0.0;
  Real mse_semantic = 0.0;
  Real mi_semantic = 0.0;
  Real rec_dec = 0.0;
  Real rec = 0.0;
  Real prediction = 0.0;
  bool has_prediction = false;
  Real total = 0.0;

  /// Ordered (name, value) pairs for logs.
  std::vector<std::pair<std::string, Real>> fields() const;
};

/// Component switches used for ablations.
struct AblationFlags {
  bool integrity_weighting = true;  // false forces the blend weight to 1 for this pass
  bool loss_integrity = true;
  bool loss_rec_enc = true;
  bool loss_rec_dec = true;
};

struct ForwardOptions {
  bool training = false;
  /// 1 or 2; stage 1 skips fusion and the prediction loss.
  int stage = 2;
  bool compute_losses = false;
  /// Only embeddings and integrity scores.
  bool integrity_only = false;
  bool keep_attention = false;
  std::uint64_t step_seed = 0;
  LossWeights weights;
  AblationFlags ablation;
};

struct ModelOutputs {
  Eigen::Index batch = 0;
  PerModality<ag::Tensor> embedded;
  ag::Tensor integrity_raw;  // [N x 3]
  Matrix integrity_used;     // [N x 3], clamped (or ones when weighting is off)
  PerModality<completion::DisentangledPair> disentangled;
  PerModality<ag::Tensor> surrogates;
  PerModality<ag::Tensor> clean_embedded;
  PerModality<ag::Tensor> clean_semantics;
  completion::DecodeResult decoded;
  fusion::FusionState fusion;
  fusion::PredictionOutput prediction;

  // Loss tensors (defined only when computed).
  ag::Tensor loss_integrity, loss_similarity, loss_difference, loss_rec_enc, loss_rec, loss_prediction;
  ag::Tensor loss_total;
  LossReport report;

  /// Predictions as a vector; requires a stage-2 style pass.
  Vector predictions() const;
};

/// Overall objective: alpha*L_ie + beta*L_rec (+ sigma*L_pred in stage 2).
ag::Tensor compose_total(int stage, const ag::Tensor& integrity, const ag::Tensor& rec, const ag::Tensor& prediction,
                         const LossWeights& weights);

class SentiModel {
 public:
  explicit SentiModel(ModelConfig config);
  SentiModel(const SentiModel&) = delete;
  SentiModel& operator=(const SentiModel&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  Vector unknown_vector() const;

  /// `clean` (the uncorrupted batch) is required when losses are computed:
  /// it feeds the gradient-stopped teacher pass that produces the
  /// reconstruction targets.
  ModelOutputs forward(const missing::CorruptedBatch& corrupted, const data::Batch* clean,
                       const ForwardOptions& options);

 private:
  ModelConfig config_;
  nn::ParameterStore store_;
  PerModality<integrity::ModalityEmbedding> embeddings_;
  PerModality<integrity::IntegrityEstimator> estimators_;
  PerModality<completion::Disentangler> disentanglers_;
  PerModality<nn::Encoder> decoders_;
  PerModality<completion::MIDiscriminator> global_discriminators_;
  PerModality<completion::MIDiscriminator> semantic_discriminators_;
  /// Pairs (l,a), (l,v), (a,v); used by the pairwise-mi similarity mode only.
  std::array<completion::MIDiscriminator, 3> similarity_discriminators_;
  fusion::FusionNetwork fusion_;
};

}  // namespace ifusion
