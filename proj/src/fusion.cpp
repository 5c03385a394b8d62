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

#include "ifusion/fusion.hpp"

#include <algorithm>

namespace ifusion::fusion {

using Index = Eigen::Index;
using nn::Init;
using nn::ParamGroup;

std::vector<Modality> per_sample_dominants(const Matrix& scores) {
  if (scores.cols() != 3) throw ShapeError("integrity scores must be [N x 3]");
  std::vector<Modality> out;
  out.reserve(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) {
    std::size_t best = 0;
    Real best_score = std::clamp(scores(i, 0), 0.0, 1.0);
    for (std::size_t m = 1; m < 3; ++m) {
      const Real s = std::clamp(scores(i, static_cast<Index>(m)), 0.0, 1.0);
      if (s > best_score) {
        best = m;
        best_score = s;
      }
    }
    out.push_back(kAllModalities[best]);
  }
  return out;
}

Modality select_dominant(const Matrix& scores) {
  if (scores.rows() < 1) throw ShapeError("select_dominant needs at least one sample");
  std::array<int, 3> votes{};
  for (Modality m : per_sample_dominants(scores)) ++votes[index_of(m)];
  std::size_t best = 0;
  for (std::size_t m = 1; m < 3; ++m) {
    if (votes[m] > votes[best]) best = m;
  }
  return kAllModalities[best];
}

DominantRefiner::DominantRefiner(nn::ParameterStore& store, nn::BlockShape shape)
    : second_(store, "fusion.dominant2", ParamGroup::kFusion, shape),
      third_(store, "fusion.dominant3", ParamGroup::kFusion, shape) {}

std::pair<ag::Tensor, ag::Tensor> DominantRefiner::operator()(const ag::Tensor& h1, Index batch,
                                                              nn::ForwardContext& ctx) const {
  ag::Tensor h2 = second_(h1, batch, ctx);
  ag::Tensor h3 = third_(h2, batch, ctx);
  return {std::move(h2), std::move(h3)};
}

FusionLayer::FusionLayer(nn::ParameterStore& store, int layer, nn::BlockShape shape) : heads_(shape.heads) {
  const std::string prefix = "fusion.layer" + std::to_string(layer);
  query_ = store.create(prefix + ".query", ParamGroup::kFusion, shape.width, shape.width, Init::kXavier);
  for (Modality m : kAllModalities) {
    const std::string mod(short_name(m));
    key_[index_of(m)] = store.create(prefix + ".key." + mod, ParamGroup::kFusion, shape.width, shape.width, Init::kXavier);
    value_[index_of(m)] =
        store.create(prefix + ".value." + mod, ParamGroup::kFusion, shape.width, shape.width, Init::kXavier);
  }
}

ag::Tensor FusionLayer::operator()(const ag::Tensor& previous, const ag::Tensor& dominant,
                                   const std::array<std::pair<Modality, ag::Tensor>, 2>& auxiliaries, Index batch,
                                   std::vector<std::vector<Matrix>>* weights) const {
  const ag::Tensor q = ag::matmul(dominant, query_);
  ag::Tensor out = previous;
  for (const auto& [m, aux] : auxiliaries) {
    std::vector<Matrix> w;
    const ag::Tensor k = ag::matmul(aux, key_[index_of(m)]);
    const ag::Tensor v = ag::matmul(aux, value_[index_of(m)]);
    out = ag::add(out, ag::attention(q, k, v, batch, heads_, weights != nullptr ? &w : nullptr));
    if (weights != nullptr) weights->push_back(std::move(w));
  }
  return out;
}

Predictor::Predictor(nn::ParameterStore& store, nn::BlockShape shape, int depth)
    : dominant_token_(store.create("predict.dominant_token", ParamGroup::kPrediction, 1, shape.width, Init::kZeros)),
      fused_token_(store.create("predict.fused_token", ParamGroup::kPrediction, 1, shape.width, Init::kZeros)),
      norm_(store, "predict.norm", ParamGroup::kPrediction, shape.width),
      head_(store, "predict.head", ParamGroup::kPrediction, shape.width, 1) {
  for (int i = 0; i < depth; ++i) {
    layers_.emplace_back(store, "predict.layer" + std::to_string(i), ParamGroup::kPrediction, shape);
  }
}

PredictionOutput Predictor::operator()(const ag::Tensor& dominant, const ag::Tensor& fused, Index batch,
                                       nn::ForwardContext& ctx) const {
  ag::Tensor query = ag::prepend_rows(dominant, dominant_token_, batch);
  const ag::Tensor context = ag::prepend_rows(fused, fused_token_, batch);
  for (const auto& layer : layers_) query = layer(query, context, batch, ctx);
  PredictionOutput out;
  out.representation = ag::slice_time(query, batch, 0, 1);
  out.score = head_(norm_(out.representation));
  return out;
}

FusionNetwork::FusionNetwork(nn::ParameterStore& store, Index steps, nn::BlockShape shape, int predictor_depth)
    : base_(store.create("fusion.base", ParamGroup::kFusion, steps, shape.width, Init::kZeros)),
      refiner_(store, shape),
      layers_{FusionLayer(store, 1, shape), FusionLayer(store, 2, shape), FusionLayer(store, 3, shape)},
      predictor_(store, shape, predictor_depth) {}

std::pair<FusionState, PredictionOutput> FusionNetwork::operator()(const PerModality<ag::Tensor>& surrogates,
                                                                   Modality dominant, Index batch,
                                                                   nn::ForwardContext& ctx, bool keep_attention) const {
  FusionState state;
  state.dominant = dominant;
  state.dominant_layers[0] = surrogates[index_of(dominant)];
  std::tie(state.dominant_layers[1], state.dominant_layers[2]) = refiner_(state.dominant_layers[0], batch, ctx);

  const auto aux = others_of(dominant);
  const std::array<std::pair<Modality, ag::Tensor>, 2> auxiliaries = {
      std::pair{aux[0], surrogates[index_of(aux[0])]}, std::pair{aux[1], surrogates[index_of(aux[1])]}};

  state.fused_layers[0] = ag::tile_rows(base_, batch);
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    std::vector<std::vector<Matrix>> weights;
    state.fused_layers[j + 1] = layers_[j](state.fused_layers[j], state.dominant_layers[j], auxiliaries, batch,
                                           keep_attention ? &weights : nullptr);
    if (keep_attention) state.attention.push_back(std::move(weights));
  }
  PredictionOutput pred = predictor_(state.dominant_layers[2], state.fused_layers[3], batch, ctx);
  return {std::move(state), std::move(pred)};
}

ag::Tensor prediction_loss(const ag::Tensor& predicted, const Vector& labels) {
  if (predicted.rows() != labels.size() || predicted.cols() != 1) {
    throw ShapeError("prediction_loss: " + std::to_string(predicted.rows()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.size() == 0) throw ShapeError("prediction_loss: empty batch");
  const Matrix y = labels;
  return ag::affine(ag::sum_squares(ag::sub(predicted, ag::Tensor::constant(y))), 1.0 / static_cast<Real>(labels.size()));
}

}  // namespace ifusion::fusion
