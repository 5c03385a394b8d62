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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifusion/common.hpp"

namespace ifusion::data {

enum class Split { kTrain, kValid, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct ModalityDims {
  Eigen::Index steps = 8;
  Eigen::Index features = 16;
  bool operator==(const ModalityDims&) const = default;
};

/// One utterance: a [T_m x d_m] matrix per modality plus a label in [-3, 3].
/// Features are stored as float32, the archive's native precision.
struct UtteranceSample {
  PerModality<MatrixF> features;
  Real label = 0.0;
  std::string id;
};

/// Immutable, validated collection of samples sharing per-modality shapes.
class Dataset {
 public:
  /// Throws ConfigError on empty input, duplicate ids, shape mismatch,
  /// non-finite entries or out-of-range labels.
  Dataset(Split split, PerModality<ModalityDims> dims, std::vector<UtteranceSample> samples);

  Split split() const { return split_; }
  const PerModality<ModalityDims>& dims() const { return dims_; }
  std::size_t size() const { return samples_.size(); }
  const UtteranceSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<UtteranceSample>& samples() const { return samples_; }
  Real mean_label() const;

 private:
  Split split_;
  PerModality<ModalityDims> dims_;
  std::vector<UtteranceSample> samples_;
};

struct DatasetSplits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Latent-variable generator with known shared/private structure.
///
/// Per sample: z_s, z_l, z_a, z_v ~ N(0, I_k); label = clamp(w . z_s, -3, 3);
/// step t of modality m is A_m z_s + B_m z_m + noise_scale * eps_t with eps_t
/// standard normal (3-tap moving average over time when smooth_noise).
struct SyntheticSpec {
  std::size_t n_train = 512;
  std::size_t n_valid = 128;
  std::size_t n_test = 128;
  int latent_dim = 4;
  PerModality<ModalityDims> dims = {ModalityDims{8, 24}, ModalityDims{8, 8}, ModalityDims{8, 16}};
  /// Length latent_dim; empty selects alternating +-1.5/sqrt(k).
  std::vector<Real> label_weights;
  /// A_m [d_m x k]; generated from the seed when absent.
  std::optional<PerModality<Matrix>> shared_maps;
  /// B_m [d_m x k]; generated (scaled by private_scale) when absent.
  std::optional<PerModality<Matrix>> private_maps;
  Real private_scale = 0.5;
  Real noise_scale = 0.1;
  bool smooth_noise = true;
  std::uint64_t seed = 1112;

  void validate() const;
  std::vector<Real> resolved_label_weights() const;
  PerModality<Matrix> resolved_shared_maps() const;
  PerModality<Matrix> resolved_private_maps() const;
};

Dataset generate_synthetic_split(const SyntheticSpec& spec, Split split);
DatasetSplits generate_synthetic_dataset(const SyntheticSpec& spec);

/// Archive layout: manifest.json plus l.bin, a.bin, v.bin holding the
/// row-major concatenation of every sample's matrix as little-endian float32.
void write_feature_archive(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_feature_archive(const std::filesystem::path& dir);

/// Writes/reads <root>/train, <root>/valid and <root>/test.
void write_archive_splits(const DatasetSplits& splits, const std::filesystem::path& root);
DatasetSplits load_archive_splits(const std::filesystem::path& root);

/// A dense batch: features[m] is [N*T_m x d_m] in sample-major order.
struct Batch {
  std::vector<std::size_t> indices;
  PerModality<Matrix> features;
  Vector labels;
  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
};

Batch assemble_batch(const Dataset& dataset, std::span<const std::size_t> indices);

/// Epoch-wise batching. Each epoch covers every sample exactly once; the
/// order depends only on (seed, epoch) and the final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  std::vector<std::size_t> permutation(int epoch) const;
  std::vector<std::vector<std::size_t>> epoch_indices(int epoch) const;
  std::vector<Batch> epoch(int epoch) const;

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

}  // namespace ifusion::data
