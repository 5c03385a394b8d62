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
#include <string>
#include <string_view>

#include "json.hpp"

#include "ifusion/data.hpp"
#include "ifusion/model.hpp"
#include "ifusion/training.hpp"

namespace ifusion::config {

using Json = nlohmann::json;

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct DataSource {
  enum class Kind { kSynthetic, kArchive };
  Kind kind = Kind::kSynthetic;
  /// Root holding train/, valid/ and test/ archives.
  std::filesystem::path archive;
  data::SyntheticSpec synthetic;
};

struct EvaluationSettings {
  eval::F1Mode f1 = eval::F1Mode::kBinary;
  /// Drop rate of the plan used by `eval` and `estimate` when none is given.
  Real drop_rate = 0.5;
  Real case_own_tol = 0.25;
  Real case_base_tol = 1.0;
};

/// The single run document. `training.seed` is the master seed: model
/// initialisation and synthetic generation use it too.
struct RunConfig {
  train::TrainingConfig training;
  ModelConfig model;
  DataSource data;
  EvaluationSettings evaluation;
  std::string output_dir = "runs/default";

  Json to_json() const;
  /// Sorted-key compact dump; the hashed form.
  std::string canonical() const;
  std::uint64_t hash() const;
  bool operator==(const RunConfig& other) const { return canonical() == other.canonical(); }
};

/// Fully defaulted, validated config. Throws ConfigError naming the key on
/// unknown keys, wrong types or out-of-range values.
RunConfig parse_config(const Json& document);
RunConfig parse_config_text(std::string_view text);
RunConfig load_config_file(const std::filesystem::path& path);

/// Applies "section.key=value" to a document; the value is read as JSON
/// when it parses, else as a string.
void apply_override(Json& document, std::string_view assignment);

/// Complete model config including input dims and init seed, for checkpoints.
Json model_to_json(const ModelConfig& c);
ModelConfig model_from_json(const Json& j);

}  // namespace ifusion::config
