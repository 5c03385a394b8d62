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

#include "ifusion/nn.hpp"

#include <cmath>

#include "ifusion/random.hpp"

namespace ifusion::nn {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEmbeddingProjection: return "embedding_projection";
    case ParamGroup::kEmbeddingEncoder: return "embedding_encoder";
    case ParamGroup::kIntegrity: return "integrity";
    case ParamGroup::kSharedEncoder: return "shared_encoder";
    case ParamGroup::kPrivateEncoder: return "private_encoder";
    case ParamGroup::kDecoder: return "decoder";
    case ParamGroup::kDiscriminator: return "mi_discriminator";
    case ParamGroup::kFusion: return "fusion";
    case ParamGroup::kPrediction: return "prediction";
  }
  return "unknown";
}

std::optional<ParamGroup> parse_group(std::string_view name) {
  for (ParamGroup g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  return std::nullopt;
}

ag::Tensor ParameterStore::create(std::string name, ParamGroup group, Eigen::Index rows,
                                  Eigen::Index cols, Init init) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  Matrix value(rows, cols);
  switch (init) {
    case Init::kZeros: value.setZero(); break;
    case Init::kOnes: value.setOnes(); break;
    case Init::kXavier: {
      CounterRng rng(seed_, {CounterRng::tag(name)});
      const Real bound = std::sqrt(6.0 / static_cast<Real>(rows + cols));
      for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
      break;
    }
    case Init::kResample: {
      value.setZero();
      for (Eigen::Index t = 0; t < rows; ++t) {
        const Real pos = rows == 1 ? 0.0
                                   : static_cast<Real>(t) * static_cast<Real>(cols - 1) /
                                         static_cast<Real>(rows - 1);
        const auto lo = static_cast<Eigen::Index>(std::floor(pos));
        const Real frac = pos - static_cast<Real>(lo);
        value(t, lo) += 1.0 - frac;
        if (frac > 0.0 && lo + 1 < cols) value(t, lo + 1) += frac;
      }
      break;
    }
  }
  ag::Tensor t = ag::Tensor::leaf(std::move(value), true);
  params_.push_back(Parameter{std::move(name), group, t});
  return t;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterStore::set_trainable(const std::set<ParamGroup>& groups) {
  for (auto& p : params_) p.tensor.set_requires_grad(groups.contains(p.group));
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.value().size());
  return n;
}

ag::Tensor ForwardContext::maybe_dropout(const ag::Tensor& x) {
  if (!training || dropout <= 0.0) return x;
  return ag::dropout(x, dropout, CounterRng::derive_key(dropout_seed, {dropout_counter++}));
}

Linear::Linear(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
               Eigen::Index out, bool bias)
    : weight_(store.create(name + ".weight", group, in, out, Init::kXavier)) {
  if (bias) bias_ = store.create(name + ".bias", group, 1, out, Init::kZeros);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, ParamGroup group,
                     Eigen::Index width)
    : gamma_(store.create(name + ".gamma", group, 1, width, Init::kOnes)),
      beta_(store.create(name + ".beta", group, 1, width, Init::kZeros)) {}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       ParamGroup group, Eigen::Index width, int heads)
    : q_(store, name + ".q", group, width, width),
      k_(store, name + ".k", group, width, width),
      v_(store, name + ".v", group, width, width),
      o_(store, name + ".o", group, width, width),
      heads_(heads) {
  if (heads <= 0 || width % heads != 0) {
    throw ConfigError(name + ": width " + std::to_string(width) + " not divisible by heads " +
                      std::to_string(heads));
  }
}

ag::Tensor MultiHeadAttention::operator()(const ag::Tensor& query, const ag::Tensor& context,
                                          Eigen::Index batch, std::vector<Matrix>* weights) const {
  return o_(ag::attention(q_(query), k_(context), v_(context), batch, heads_, weights));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, ParamGroup group,
                         Eigen::Index width, Eigen::Index hidden)
    : in_(store, name + ".in", group, width, hidden), out_(store, name + ".out", group, hidden, width) {}

ag::Tensor FeedForward::operator()(const ag::Tensor& x, ForwardContext& ctx) const {
  return out_(ctx.maybe_dropout(ag::gelu(in_(x))));
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, ParamGroup group,
                           BlockShape shape)
    : ln_attn_(store, name + ".ln_attn", group, shape.width),
      ln_ff_(store, name + ".ln_ff", group, shape.width),
      attn_(store, name + ".attn", group, shape.width, shape.heads),
      ff_(store, name + ".ff", group, shape.width, shape.feedforward) {}

ag::Tensor EncoderLayer::operator()(const ag::Tensor& x, Eigen::Index batch,
                                    ForwardContext& ctx) const {
  const ag::Tensor normed = ln_attn_(x);
  ag::Tensor h = ag::add(x, ctx.maybe_dropout(attn_(normed, normed, batch)));
  return ag::add(h, ctx.maybe_dropout(ff_(ln_ff_(h), ctx)));
}

Encoder::Encoder(ParameterStore& store, const std::string& name, ParamGroup group,
                 BlockShape shape, int depth) {
  layers_.reserve(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), group, shape);
  }
}

ag::Tensor Encoder::operator()(const ag::Tensor& x, Eigen::Index batch, ForwardContext& ctx) const {
  ag::Tensor h = x;
  for (const auto& layer : layers_) h = layer(h, batch, ctx);
  return h;
}

CrossLayer::CrossLayer(ParameterStore& store, const std::string& name, ParamGroup group,
                       BlockShape shape)
    : ln_q_(store, name + ".ln_q", group, shape.width),
      ln_kv_(store, name + ".ln_kv", group, shape.width),
      ln_ff_(store, name + ".ln_ff", group, shape.width),
      attn_(store, name + ".attn", group, shape.width, shape.heads),
      ff_(store, name + ".ff", group, shape.width, shape.feedforward) {}

ag::Tensor CrossLayer::operator()(const ag::Tensor& x, const ag::Tensor& context,
                                  Eigen::Index batch, ForwardContext& ctx) const {
  ag::Tensor h = ag::add(x, ctx.maybe_dropout(attn_(ln_q_(x), ln_kv_(context), batch)));
  return ag::add(h, ctx.maybe_dropout(ff_(ln_ff_(h), ctx)));
}

}  // namespace ifusion::nn
