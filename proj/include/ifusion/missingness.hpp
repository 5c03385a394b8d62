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

// Dual-level missingness: whole modalities dropped per sample (inter) and a
// random fraction of time steps erased within each surviving modality
// (intra). Ground-truth integrity is kept/total steps.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifusion/data.hpp"

namespace ifusion::missing {

struct SamplePlan {
  PerModality<bool> dropped{};
  /// kept[m][t] != 0 means step t of modality m survives.
  PerModality<std::vector<std::uint8_t>> kept;
  PerModality<Real> integrity{};
  bool operator==(const SamplePlan&) const = default;
};

struct MissingPlan {
  PerModality<Eigen::Index> steps{};
  std::vector<SamplePlan> samples;

  std::size_t size() const { return samples.size(); }
  /// Sub-plan for the given sample positions (e.g. a batch's dataset indices).
  MissingPlan select(std::span<const std::size_t> indices) const;
  /// Throws ConfigError if any invariant is violated.
  void validate() const;
  /// [N x 3] integrity labels, columns l, a, v.
  Matrix integrity_matrix() const;
  bool operator==(const MissingPlan&) const = default;
};

struct MissingnessOptions {
  Real drop_rate = 0.5;
  /// Overrides the per-modality U[0,1] intra missing ratio.
  std::optional<Real> fixed_intra_ratio;
};

/// Index into {l}, {a}, {v}, {l,a}, {l,v}, {a,v}: the six nonempty proper
/// subsets a sample may lose.
PerModality<bool> drop_subset(int index);

/// Number of masked steps for a missing ratio: round(ratio * T), half away
/// from zero.
Eigen::Index masked_count(Real ratio, Eigen::Index steps);

MissingPlan sample_missing_plan(std::size_t n, PerModality<Eigen::Index> steps,
                                const MissingnessOptions& options, std::uint64_t seed);

/// Modality-retention modes 0..5: {a,v}, {l,v}, {l,a}, {v}, {a}, {l}.
PerModality<bool> retained_modalities(int mode);
MissingPlan mode_plan(int mode, std::size_t n, PerModality<Eigen::Index> steps);

struct CorruptedBatch {
  PerModality<Matrix> features;
  MissingPlan plan;
  Vector labels;
};

/// Zeroes masked acoustic/visual steps and replaces masked language steps
/// with `unknown_vector`; kept steps are copied bit for bit.
CorruptedBatch apply_missingness(const data::Batch& batch, const MissingPlan& plan,
                                 const Vector& unknown_vector);

std::string plan_to_json(const MissingPlan& plan);
MissingPlan plan_from_json(const std::string& text);

}  // namespace ifusion::missing
