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

#include "ifusion/completion.hpp"

#include <numeric>

#include "ifusion/random.hpp"

namespace ifusion::completion {

using Index = Eigen::Index;
using nn::ParamGroup;

Disentangler::Disentangler(nn::ParameterStore& store, Modality m, nn::BlockShape shape, int depth)
    : shared_(store, "shared." + std::string(short_name(m)), ParamGroup::kSharedEncoder, shape, depth),
      private_(store, "private." + std::string(short_name(m)), ParamGroup::kPrivateEncoder, shape, depth) {}

DisentangledPair Disentangler::operator()(const ag::Tensor& embedded, Index batch, nn::ForwardContext& ctx) const {
  return DisentangledPair{shared_(embedded, batch, ctx), private_(embedded, batch, ctx)};
}

ag::Tensor Disentangler::shared(const ag::Tensor& x, Index batch, nn::ForwardContext& ctx) const {
  return shared_(x, batch, ctx);
}

ag::Tensor Disentangler::priv(const ag::Tensor& x, Index batch, nn::ForwardContext& ctx) const {
  return private_(x, batch, ctx);
}

namespace {

ag::Tensor batch_sq_distance(const ag::Tensor& x, const ag::Tensor& y, Index batch) {
  return ag::affine(ag::sum_squares(ag::sub(x, y)), 1.0 / static_cast<Real>(batch));
}

}  // namespace

ag::Tensor similarity_loss(const ag::Tensor& shared_l, const ag::Tensor& shared_a, const ag::Tensor& shared_v,
                           Index batch) {
  // Fixed l-a, l-v, a-v summation order.
  ag::Tensor total = batch_sq_distance(shared_l, shared_a, batch);
  total = ag::add(total, batch_sq_distance(shared_l, shared_v, batch));
  return ag::add(total, batch_sq_distance(shared_a, shared_v, batch));
}

ag::Tensor centroid_similarity_loss(const ag::Tensor& shared_l, const ag::Tensor& shared_a,
                                    const ag::Tensor& shared_v, Index batch) {
  const ag::Tensor centroid = ag::affine(ag::add(ag::add(shared_l, shared_a), shared_v), 1.0 / 3.0);
  ag::Tensor total = batch_sq_distance(shared_l, centroid, batch);
  total = ag::add(total, batch_sq_distance(shared_a, centroid, batch));
  return ag::add(total, batch_sq_distance(shared_v, centroid, batch));
}

ag::Tensor difference_loss(const DisentangledPair& pair, Index batch) {
  return ag::cross_covariance_penalty(pair.shared, pair.priv, batch);
}

ag::Tensor difference_loss(const PerModality<DisentangledPair>& pairs, Index batch) {
  ag::Tensor total = difference_loss(pairs[0], batch);
  total = ag::add(total, difference_loss(pairs[1], batch));
  total = ag::add(total, difference_loss(pairs[2], batch));
  return ag::affine(total, 1.0 / 3.0);
}

ag::Tensor encoder_completion_loss(const ag::Tensor& similarity, const ag::Tensor& difference) {
  return ag::add(similarity, difference);
}

ag::Tensor build_surrogate(const ag::Tensor& embedded, const ag::Tensor& integrity, const ag::Tensor& shared_other1,
                           const ag::Tensor& shared_other2, Index batch) {
  const ag::Tensor own = ag::scale_samples(embedded, integrity, batch);
  const ag::Tensor donors = ag::scale_samples(ag::add(shared_other1, shared_other2), ag::affine(integrity, -1.0, 1.0), batch);
  return ag::add(own, donors);
}

MIDiscriminator::MIDiscriminator(nn::ParameterStore& store, const std::string& name, Index width)
    : hidden1_(store, name + ".hidden1", ParamGroup::kDiscriminator, 2 * width, width),
      hidden2_(store, name + ".hidden2", ParamGroup::kDiscriminator, width, width),
      out_(store, name + ".out", ParamGroup::kDiscriminator, width, 1) {}

ag::Tensor MIDiscriminator::score_pooled(const ag::Tensor& x_pooled, const ag::Tensor& y_pooled) const {
  const ag::Tensor h = ag::gelu(hidden1_(ag::concat_cols(x_pooled, y_pooled)));
  return out_(ag::gelu(hidden2_(h)));
}

std::vector<Index> derangement(Index n, std::uint64_t seed) {
  if (n < 2) throw ShapeError("derangement needs at least 2 samples");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    std::iota(perm.begin(), perm.end(), Index{0});
    CounterRng rng(seed, {CounterRng::tag("derangement"), attempt});
    for (auto i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);
    bool fixed = false;
    for (std::size_t i = 0; i < perm.size(); ++i) fixed = fixed || perm[i] == static_cast<Index>(i);
    if (!fixed) return perm;
  }
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i + 1) % n;
  return perm;
}

ag::Tensor mi_bound_from_scores(const ag::Tensor& joint_scores, const ag::Tensor& marginal_scores) {
  const ag::Tensor joint = ag::affine(ag::mean(ag::softplus(ag::affine(joint_scores, -1.0))), -1.0);
  const ag::Tensor marginal = ag::affine(ag::mean(ag::softplus(marginal_scores)), -1.0);
  return ag::add(joint, marginal);
}

ag::Tensor mi_lower_bound(const ag::Tensor& x, const ag::Tensor& y, const MIDiscriminator& disc, Index batch,
                          std::span<const Index> perm) {
  if (batch < 2) throw ShapeError("mutual information bound needs a batch of at least 2");
  if (static_cast<Index>(perm.size()) != batch) throw ShapeError("negative-sample permutation has wrong length");
  const ag::Tensor xp = ag::mean_time(x, batch);
  const ag::Tensor yp = ag::mean_time(y, batch);
  return mi_bound_from_scores(disc.score_pooled(xp, yp), disc.score_pooled(xp, ag::gather_rows(yp, perm)));
}

DecodeResult decode_and_validate(const DecodeInputs& inputs, const PerModality<nn::Encoder>& decoders,
                                 const PerModality<Disentangler>& disentanglers,
                                 const PerModality<MIDiscriminator>& global_discriminators,
                                 const PerModality<MIDiscriminator>& semantic_discriminators,
                                 const DecoderWeights& weights, Index batch, std::span<const Index> perm,
                                 nn::ForwardContext& ctx) {
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    if (!inputs.clean_embeddings[mi].defined() || !inputs.clean_semantics[mi].defined()) {
      throw ConfigError("decode_and_validate: clean targets missing for modality " + std::string(short_name(m)) +
                        " (teacher pass not run)");
    }
  }

  DecodeResult r;
  const Real inv_n = 1.0 / static_cast<Real>(batch);
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    r.reconstructed[mi] = decoders[mi](inputs.surrogates[mi], batch, ctx);
    r.re_encoded[mi] = disentanglers[mi].shared(r.reconstructed[mi], batch, ctx);

    const ag::Tensor target_g = inputs.clean_embeddings[mi].detach();
    const ag::Tensor target_s = inputs.clean_semantics[mi].detach();
    const ag::Tensor mse_g = ag::affine(ag::sum_squares(ag::sub(r.reconstructed[mi], target_g)), inv_n);
    const ag::Tensor mse_s = ag::affine(ag::sum_squares(ag::sub(r.re_encoded[mi], target_s)), inv_n);
    const ag::Tensor mi_g =
        ag::affine(mi_lower_bound(r.reconstructed[mi], target_g, global_discriminators[mi], batch, perm), -1.0);
    const ag::Tensor mi_s =
        ag::affine(mi_lower_bound(r.re_encoded[mi], target_s, semantic_discriminators[mi], batch, perm), -1.0);
    r.mse_global = r.mse_global.defined() ? ag::add(r.mse_global, mse_g) : mse_g;
    r.mse_semantic = r.mse_semantic.defined() ? ag::add(r.mse_semantic, mse_s) : mse_s;
    r.mi_global = r.mi_global.defined() ? ag::add(r.mi_global, mi_g) : mi_g;
    r.mi_semantic = r.mi_semantic.defined() ? ag::add(r.mi_semantic, mi_s) : mi_s;
  }
  ag::Tensor total = ag::affine(r.mse_global, weights.mse_global);
  total = ag::add(total, ag::affine(r.mi_global, weights.mi_global));
  total = ag::add(total, ag::affine(r.mse_semantic, weights.mse_semantic));
  r.total = ag::add(total, ag::affine(r.mi_semantic, weights.mi_semantic));
  return r;
}

}  // namespace ifusion::completion
