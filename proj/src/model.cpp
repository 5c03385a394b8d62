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

#include "ifusion/model.hpp"

#include "ifusion/random.hpp"

namespace ifusion {

using Index = Eigen::Index;

std::string_view similarity_mode_name(SimilarityMode m) {
  switch (m) {
    case SimilarityMode::kPairwiseMse: return "pairwise-mse";
    case SimilarityMode::kPairwiseMi: return "pairwise-mi";
    case SimilarityMode::kThreeWay: return "three-way";
  }
  return "pairwise-mse";
}

SimilarityMode parse_similarity_mode(std::string_view name) {
  if (name == "pairwise-mse") return SimilarityMode::kPairwiseMse;
  if (name == "pairwise-mi") return SimilarityMode::kPairwiseMi;
  if (name == "three-way") return SimilarityMode::kThreeWay;
  throw ConfigError("unknown similarity mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (steps < 1) throw ConfigError("model.steps must be >= 1");
  if (width < 1) throw ConfigError("model.width must be >= 1");
  if (heads < 1 || width % heads != 0) throw ConfigError("model.width must be divisible by model.heads");
  if (feedforward < 0) throw ConfigError("model.feedforward must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  for (int depth : {embed_depth, integrity_depth, disentangle_depth, decoder_depth, predictor_depth}) {
    if (depth < 1) throw ConfigError("model depths must be >= 1");
  }
  for (const auto& d : input_dims) {
    if (d.steps < 1 || d.features < 1) throw ConfigError("model input dims must be positive");
  }
}

std::vector<std::pair<std::string, Real>> LossReport::fields() const {
  std::vector<std::pair<std::string, Real>> f = {
      {"loss_ie", integrity},        {"loss_sim", similarity},   {"loss_diff", difference},
      {"loss_rec_enc", rec_enc},     {"loss_mse_g", mse_global}, {"loss_mi_g", mi_global},
      {"loss_mse_s", mse_semantic},  {"loss_mi_s", mi_semantic}, {"loss_rec_dec", rec_dec},
      {"loss_rec", rec}};
  if (has_prediction) f.emplace_back("loss_pred", prediction);
  f.emplace_back("loss_total", total);
  return f;
}

Vector ModelOutputs::predictions() const {
  if (!prediction.score.defined()) throw ConfigError("forward pass did not run the predictor");
  return prediction.score.value().col(0);
}

ag::Tensor compose_total(int stage, const ag::Tensor& integrity, const ag::Tensor& rec, const ag::Tensor& prediction,
                         const LossWeights& weights) {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (!integrity.defined() || !rec.defined()) throw ConfigError("total loss needs the integrity and completion terms");
  ag::Tensor total = ag::add(ag::affine(integrity, weights.alpha), ag::affine(rec, weights.beta));
  if (stage == 2) {
    if (!prediction.defined()) throw ConfigError("stage-2 total loss needs the prediction term");
    total = ag::add(total, ag::affine(prediction, weights.sigma));
  }
  return total;
}

SentiModel::SentiModel(ModelConfig config) : config_(std::move(config)), store_(config_.init_seed) {
  config_.validate();
  const nn::BlockShape shape = config_.block_shape();
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    const std::string mod(short_name(m));
    embeddings_[mi] =
        integrity::ModalityEmbedding(store_, m, config_.input_dims[mi], config_.steps, shape, config_.embed_depth);
    estimators_[mi] = integrity::IntegrityEstimator(store_, m, shape, config_.integrity_depth);
    disentanglers_[mi] = completion::Disentangler(store_, m, shape, config_.disentangle_depth);
    decoders_[mi] = nn::Encoder(store_, "decoder." + mod, nn::ParamGroup::kDecoder, shape, config_.decoder_depth);
    global_discriminators_[mi] = completion::MIDiscriminator(store_, "mi.global." + mod, config_.width);
    semantic_discriminators_[mi] = completion::MIDiscriminator(store_, "mi.semantic." + mod, config_.width);
  }
  if (config_.similarity == SimilarityMode::kPairwiseMi) {
    similarity_discriminators_ = {completion::MIDiscriminator(store_, "mi.similarity.la", config_.width),
                                  completion::MIDiscriminator(store_, "mi.similarity.lv", config_.width),
                                  completion::MIDiscriminator(store_, "mi.similarity.av", config_.width)};
  }
  fusion_ = fusion::FusionNetwork(store_, config_.steps, shape, config_.predictor_depth);
}

Vector SentiModel::unknown_vector() const {
  return Vector::Constant(config_.input_dims[index_of(Modality::kLanguage)].features, config_.unknown_value);
}

ModelOutputs SentiModel::forward(const missing::CorruptedBatch& corrupted, const data::Batch* clean,
                                 const ForwardOptions& options) {
  const Index n = corrupted.labels.size();
  if (n < 1) throw ShapeError("forward: empty batch");
  if (options.stage != 1 && options.stage != 2) throw ConfigError("stage must be 1 or 2");

  nn::ForwardContext ctx{options.training, config_.dropout, options.step_seed, 0};
  ModelOutputs out;
  out.batch = n;

  PerModality<ag::Tensor> raw;
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    out.embedded[mi] = embeddings_[mi](ag::Tensor::constant(corrupted.features[mi]), n, ctx);
    raw[mi] = estimators_[mi](out.embedded[mi], n, ctx);
  }
  out.integrity_raw = ag::concat_cols(ag::concat_cols(raw[0], raw[1]), raw[2]);
  const Matrix clamped = out.integrity_raw.value().cwiseMax(0.0).cwiseMin(1.0);
  if (options.integrity_only) {
    out.integrity_used = clamped;
    if (options.compute_losses) {
      out.loss_integrity = integrity::integrity_loss(out.integrity_raw, corrupted.plan.integrity_matrix());
      out.report.integrity = out.loss_integrity.item();
    }
    return out;
  }

  const bool weighting = config_.integrity_weighting && options.ablation.integrity_weighting;
  PerModality<ag::Tensor> used;
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    // The blend weight is a gradient-stopped copy: the estimator learns from
    // its own labels only, never from the completion terms.
    used[mi] = weighting ? ag::clamp(raw[mi], 0.0, 1.0).detach()
                                                    : ag::Tensor::constant(Matrix::Ones(n, 1));
  }
  out.integrity_used = weighting ? clamped : Matrix::Ones(n, 3);

  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    if (options.compute_losses) {
      out.disentangled[mi] = disentanglers_[mi](out.embedded[mi], n, ctx);
    } else {
      out.disentangled[mi].shared = disentanglers_[mi].shared(out.embedded[mi], n, ctx);
    }
  }
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    const auto o = others_of(m);
    out.surrogates[mi] = completion::build_surrogate(out.embedded[mi], used[mi],
                                                     out.disentangled[index_of(o[0])].shared,
                                                     out.disentangled[index_of(o[1])].shared, n);
  }

  if (options.compute_losses) {
    if (clean == nullptr) throw ConfigError("forward: losses need the clean batch for the teacher pass");
    {
      ag::NoGradGuard no_grad;
      nn::ForwardContext teacher{false, 0.0, 0, 0};
      for (Modality m : kAllModalities) {
        const auto mi = index_of(m);
        out.clean_embedded[mi] = embeddings_[mi](ag::Tensor::constant(clean->features[mi]), n, teacher);
        out.clean_semantics[mi] = disentanglers_[mi].shared(out.clean_embedded[mi], n, teacher);
      }
    }

    out.loss_integrity = integrity::integrity_loss(out.integrity_raw, corrupted.plan.integrity_matrix());

    const auto& s = out.disentangled;
    const std::uint64_t negatives_seed = CounterRng::derive_key(options.step_seed, {CounterRng::tag("negatives")});
    std::vector<Index> perm;
    if (n >= 2) perm = completion::derangement(n, negatives_seed);

    switch (config_.similarity) {
      case SimilarityMode::kPairwiseMse:
        out.loss_similarity = completion::similarity_loss(s[0].shared, s[1].shared, s[2].shared, n);
        break;
      case SimilarityMode::kThreeWay:
        out.loss_similarity = completion::centroid_similarity_loss(s[0].shared, s[1].shared, s[2].shared, n);
        break;
      case SimilarityMode::kPairwiseMi: {
        if (n < 2) {
          out.loss_similarity = ag::Tensor::scalar(0.0);
          break;
        }
        const std::array<std::pair<int, int>, 3> pairs = {{{0, 1}, {0, 2}, {1, 2}}};
        ag::Tensor total;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          const auto& [x, y] = pairs[p];
          const ag::Tensor term = ag::affine(
              completion::mi_lower_bound(s[x].shared, s[y].shared, similarity_discriminators_[p], n, perm), -1.0);
          total = total.defined() ? ag::add(total, term) : term;
        }
        out.loss_similarity = total;
        break;
      }
    }
    out.loss_difference = completion::difference_loss(out.disentangled, n);
    out.loss_rec_enc = completion::encoder_completion_loss(out.loss_similarity, out.loss_difference);

    if (n >= 2) {
      completion::DecodeInputs inputs{out.surrogates, out.clean_embedded, out.clean_semantics};
      out.decoded = completion::decode_and_validate(inputs, decoders_, disentanglers_, global_discriminators_,
                                                    semantic_discriminators_, options.weights.decoder, n, perm, ctx);
    } else {
      // A single sample has no product-of-marginals negatives; the
      // decoder-level terms are skipped for such a batch.
      const ag::Tensor zero = ag::Tensor::scalar(0.0);
      out.decoded.mse_global = out.decoded.mi_global = out.decoded.mse_semantic = out.decoded.mi_semantic = zero;
      out.decoded.total = zero;
    }

    const ag::Tensor zero = ag::Tensor::scalar(0.0);
    const ag::Tensor enc_term = options.ablation.loss_rec_enc ? out.loss_rec_enc : zero;
    const ag::Tensor dec_term = options.ablation.loss_rec_dec ? out.decoded.total : zero;
    out.loss_rec = ag::add(enc_term, dec_term);
  }

  if (options.stage == 2 || !options.compute_losses) {
    const Modality dominant = fusion::select_dominant(clamped);
    std::tie(out.fusion, out.prediction) = fusion_(out.surrogates, dominant, n, ctx, options.keep_attention);
    if (options.compute_losses) out.loss_prediction = fusion::prediction_loss(out.prediction.score, corrupted.labels);
  }

  if (options.compute_losses) {
    const ag::Tensor ie_term = options.ablation.loss_integrity ? out.loss_integrity : ag::Tensor::scalar(0.0);
    out.loss_total = compose_total(options.stage, ie_term, out.loss_rec, out.loss_prediction, options.weights);

    LossReport& r = out.report;
    r.integrity = out.loss_integrity.item();
    r.similarity = out.loss_similarity.item();
    r.difference = out.loss_difference.item();
    r.rec_enc = out.loss_rec_enc.item();
    r.mse_global = out.decoded.mse_global.item();
    r.mi_global = out.decoded.mi_global.item();
    r.mse_semantic = out.decoded.mse_semantic.item();
    r.mi_semantic = out.decoded.mi_semantic.item();
    r.rec_dec = out.decoded.total.item();
    r.rec = out.loss_rec.item();
    r.has_prediction = out.loss_prediction.defined();
    if (r.has_prediction) r.prediction = out.loss_prediction.item();
    r.total = out.loss_total.item();
  }
  return out;
}

}  // namespace ifusion
