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

// Glue shared by the command-line tool and the end-to-end tests.

#pragma once

#include <filesystem>
#include <optional>

#include "ifusion/config.hpp"
#include "ifusion/data.hpp"
#include "ifusion/training.hpp"

namespace ifusion::pipeline {

/// Synthetic splits from the spec, or the train/valid/test archives.
data::DatasetSplits load_data(const config::RunConfig& run);

/// One split from an archive path: the directory itself when it holds a
/// manifest, else its `<split>` subdirectory.
data::Dataset load_split(const std::filesystem::path& archive, data::Split split);

/// Model config of `run` with input dims taken from the data.
ModelConfig model_config_for(const config::RunConfig& run, const data::Dataset& reference);

/// Writes config.json (pretty, with the hash) into `dir`.
void write_resolved_config(const config::RunConfig& run, const std::filesystem::path& dir);

/// The run config stamped into a checkpoint.
config::RunConfig run_config_of(const train::Checkpoint& checkpoint);

/// Trains per `run`, writing train_log.jsonl, best.ckpt, last.ckpt,
/// config.json and metrics.csv (valid and test at the configured drop
/// rate) under `out`.
train::TrainResult run_training(const config::RunConfig& run, const data::DatasetSplits& splits,
                                const std::filesystem::path& out,
                                const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Plan for evaluating `dataset` at `drop_rate`, keyed on the master seed.
missing::MissingPlan evaluation_plan(const data::Dataset& dataset, Real drop_rate, std::uint64_t seed);

}  // namespace ifusion::pipeline
