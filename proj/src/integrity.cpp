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

#include "ifusion/integrity.hpp"

namespace ifusion::integrity {

using nn::Init;
using nn::ParamGroup;

ModalityEmbedding::ModalityEmbedding(nn::ParameterStore& store, Modality m, data::ModalityDims input,
                                     Eigen::Index steps, nn::BlockShape shape, int depth)
    : input_(input), steps_(steps) {
  const std::string prefix = "embed." + std::string(short_name(m));
  projection_ = nn::Linear(store, prefix + ".proj", ParamGroup::kEmbeddingProjection, input.features, shape.width);
  // Equal lengths need no resampling; a learned map there would only let
  // the completion terms blur masked steps into kept ones.
  if (input.steps != steps) {
    resample_ = store.create(prefix + ".resample", ParamGroup::kEmbeddingProjection, steps, input.steps, Init::kResample);
  }
  anchor_ = store.create(prefix + ".anchor", ParamGroup::kEmbeddingProjection, 1, shape.width, Init::kZeros);
  encoder_ = nn::Encoder(store, prefix + ".encoder", ParamGroup::kEmbeddingEncoder, shape, depth);
}

ag::Tensor ModalityEmbedding::operator()(const ag::Tensor& features, Eigen::Index batch,
                                         nn::ForwardContext& ctx) const {
  if (features.cols() != input_.features || features.rows() != batch * input_.steps) {
    throw ShapeError("embedding expects [" + std::to_string(batch * input_.steps) + "x" +
                     std::to_string(input_.features) + "] input, got [" + std::to_string(features.rows()) + "x" +
                     std::to_string(features.cols()) + "]");
  }
  ag::Tensor projected = projection_(features);
  if (resample_.defined()) projected = ag::time_mix(projected, resample_, batch);
  const ag::Tensor encoded = encoder_(ag::prepend_rows(projected, anchor_, batch), batch, ctx);
  return ag::slice_time(encoded, batch, 1, steps_);
}

IntegrityEstimator::IntegrityEstimator(nn::ParameterStore& store, Modality m, nn::BlockShape shape, int depth) {
  const std::string prefix = "integrity." + std::string(short_name(m));
  token_ = store.create(prefix + ".token", ParamGroup::kIntegrity, 1, shape.width, Init::kZeros);
  encoder_ = nn::Encoder(store, prefix + ".encoder", ParamGroup::kIntegrity, shape, depth);
  norm_ = nn::LayerNorm(store, prefix + ".norm", ParamGroup::kIntegrity, shape.width);
  head_ = nn::Linear(store, prefix + ".head", ParamGroup::kIntegrity, shape.width, 1);
}

ag::Tensor IntegrityEstimator::operator()(const ag::Tensor& embedded, Eigen::Index batch,
                                          nn::ForwardContext& ctx) const {
  const ag::Tensor encoded = encoder_(ag::prepend_rows(embedded, token_, batch), batch, ctx);
  return head_(norm_(ag::slice_time(encoded, batch, 0, 1)));
}

ag::Tensor integrity_loss(const ag::Tensor& predicted, const Matrix& labels) {
  if (predicted.rows() != labels.rows() || predicted.cols() != labels.cols()) {
    throw ShapeError("integrity_loss: prediction and label shapes differ");
  }
  if (labels.rows() == 0) throw ShapeError("integrity_loss: empty batch");
  const auto diff = ag::sub(predicted, ag::Tensor::constant(labels));
  return ag::affine(ag::sum_squares(diff), 1.0 / static_cast<Real>(labels.rows()));
}

}  // namespace ifusion::integrity
