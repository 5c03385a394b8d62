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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ifusion/autograd.hpp"

namespace ifusion::nn {

/// Trainability units. The two-stage schedule freezes and thaws whole groups.
enum class ParamGroup {
  kEmbeddingProjection,
  kEmbeddingEncoder,
  kIntegrity,
  kSharedEncoder,
  kPrivateEncoder,
  kDecoder,
  kDiscriminator,
  kFusion,
  kPrediction,
};

inline constexpr std::array<ParamGroup, 9> kAllGroups = {
    ParamGroup::kEmbeddingProjection, ParamGroup::kEmbeddingEncoder, ParamGroup::kIntegrity,
    ParamGroup::kSharedEncoder,       ParamGroup::kPrivateEncoder,   ParamGroup::kDecoder,
    ParamGroup::kDiscriminator,       ParamGroup::kFusion,           ParamGroup::kPrediction};

std::string_view group_name(ParamGroup g);
std::optional<ParamGroup> parse_group(std::string_view name);

enum class Init {
  kZeros,
  kOnes,
  kXavier,
  /// Linear-interpolation resampling matrix [T_out x T_in]; identity when equal.
  kResample,
};

struct Parameter {
  std::string name;
  ParamGroup group;
  ag::Tensor tensor;
};

/// Owns every learnable tensor, in creation order. Initial values depend
/// only on (seed, parameter name), never on construction order.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  ag::Tensor create(std::string name, ParamGroup group, Eigen::Index rows, Eigen::Index cols,
                    Init init);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter* find(std::string_view name) const;

  /// Marks exactly the parameters in `groups` as requiring gradients.
  void set_trainable(const std::set<ParamGroup>& groups);
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::uint64_t seed_;
  std::vector<Parameter> params_;
};

/// Per-forward-pass switches. Dropout keys are drawn from a counter so a
/// training step is reproducible from (seed, step).
struct ForwardContext {
  bool training = false;
  Real dropout = 0.0;
  std::uint64_t dropout_seed = 0;
  std::uint64_t dropout_counter = 0;

  ag::Tensor maybe_dropout(const ag::Tensor& x);
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
         Eigen::Index out, bool bias = true);
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::linear(x, weight_, bias_); }
  const ag::Tensor& weight() const { return weight_; }

 private:
  ag::Tensor weight_;
  ag::Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index width);
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::layer_norm(x, gamma_, beta_); }

 private:
  ag::Tensor gamma_;
  ag::Tensor beta_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, ParamGroup group,
                     Eigen::Index width, int heads);
  ag::Tensor operator()(const ag::Tensor& query, const ag::Tensor& context, Eigen::Index batch,
                        std::vector<Matrix>* weights = nullptr) const;

 private:
  Linear q_, k_, v_, o_;
  int heads_ = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index width,
              Eigen::Index hidden);
  ag::Tensor operator()(const ag::Tensor& x, ForwardContext& ctx) const;

 private:
  Linear in_, out_;
};

struct BlockShape {
  Eigen::Index width = 128;
  int heads = 4;
  Eigen::Index feedforward = 512;
};

/// Pre-norm self-attention block: x += Attn(LN x); x += FFN(LN x).
/// With every parameter zero the block is the identity.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterStore& store, const std::string& name, ParamGroup group, BlockShape shape);
  ag::Tensor operator()(const ag::Tensor& x, Eigen::Index batch, ForwardContext& ctx) const;

 private:
  LayerNorm ln_attn_, ln_ff_;
  MultiHeadAttention attn_;
  FeedForward ff_;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore& store, const std::string& name, ParamGroup group, BlockShape shape,
          int depth);
  ag::Tensor operator()(const ag::Tensor& x, Eigen::Index batch, ForwardContext& ctx) const;
  int depth() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<EncoderLayer> layers_;
};

/// Pre-norm cross-attention block: x += Attn(LN x, LN ctx); x += FFN(LN x).
class CrossLayer {
 public:
  CrossLayer() = default;
  CrossLayer(ParameterStore& store, const std::string& name, ParamGroup group, BlockShape shape);
  ag::Tensor operator()(const ag::Tensor& x, const ag::Tensor& context, Eigen::Index batch,
                        ForwardContext& ctx) const;

 private:
  LayerNorm ln_q_, ln_kv_, ln_ff_;
  MultiHeadAttention attn_;
  FeedForward ff_;
};

}  // namespace ifusion::nn
