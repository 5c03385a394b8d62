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
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ifusion/data.hpp"
#include "ifusion/evaluation.hpp"
#include "ifusion/model.hpp"
#include "ifusion/optim.hpp"

namespace ifusion::train {

struct TrainingConfig {
  std::uint64_t seed = 1112;
  std::size_t batch_size = 64;
  int epochs = 150;
  int stage1_epochs = 40;
  Real lr = 1e-4;
  Real weight_decay = 1e-4;
  LossWeights weights;
  int warmup_epochs = 5;
  int early_stop_patience = 20;
  /// Sample-level inter-modality drop probability during training.
  Real drop_rate = 0.5;
  /// Overrides the U[0,1] intra missing ratio when set.
  std::optional<Real> intra_ratio;
  /// Draw a fresh missing plan every epoch; otherwise one plan per sample.
  bool resample_missing = true;
  /// Global gradient-norm clip; 0 disables.
  Real grad_clip = 0.0;
  AblationFlags ablation;
  eval::F1Mode f1 = eval::F1Mode::kBinary;

  void validate() const;
  missing::MissingnessOptions missingness() const;
};

/// Loss parts for the overall objective; an absent part is an error where
/// the stage needs it.
struct LossParts {
  std::optional<Real> integrity;
  std::optional<Real> rec;
  std::optional<Real> prediction;
};

LossParts parts_of(const LossReport& report);

/// alpha*L_ie + beta*L_rec, plus sigma*L_pred in stage 2.
Real total_loss(int stage, const LossParts& parts, const LossWeights& weights = {});

std::set<nn::ParamGroup> stage_parameter_mask(int stage);

/// Stage of a zero-based epoch.
inline int stage_of(int epoch, const TrainingConfig& c) { return epoch < c.stage1_epochs ? 1 : 2; }

/// Missing plan used for the training split in `epoch`.
missing::MissingPlan training_plan(const TrainingConfig& c, const data::Dataset& train, int epoch);
/// Fixed plan used for validation during training.
missing::MissingPlan validation_plan(const TrainingConfig& c, const data::Dataset& valid);

struct Checkpoint {
  std::string model_config;  // canonical JSON of the model config
  std::string run_config;    // canonical JSON of the resolved run config (may be empty)
  std::uint64_t config_hash = 0;
  int epoch = 0;             // completed epochs
  Real best_valid_mae = 0.0;
  bool has_best = false;
  int stale_epochs = 0;
  std::vector<std::pair<std::string, Matrix>> parameters;
  std::string optimizer_state;
};

Checkpoint snapshot(const SentiModel& model, const optim::AdamW* optimizer);
/// Copies parameter values into `model`; names and shapes must match.
void restore(SentiModel& model, const Checkpoint& checkpoint);
std::unique_ptr<SentiModel> model_from_checkpoint(const Checkpoint& checkpoint);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochLog {
  int epoch = 0;
  int stage = 1;
  Real lr = 0.0;
  LossReport losses;  // means over the epoch's batches
  Real valid_integrity_mse = 0.0;
  std::optional<eval::MetricReport> valid;
  bool improved = false;
  Real seconds = 0.0;

  std::string to_json() const;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochLog> log;
  bool early_stopped = false;
};

struct TrainHooks {
  /// Called after every epoch (e.g. to append a log line).
  std::function<void(const EpochLog&)> on_epoch;
  /// Called after every optimizer step with (epoch, step within epoch).
  std::function<void(int, int)> on_step;
  /// Stop after this many optimizer steps in total (tests); 0 = no limit.
  int max_steps = 0;
};

/// Two-stage trainer over one model. Epoch e draws its batches, plans and
/// dropout keys from (seed, e) only, so a resumed run repeats the same
/// sequence as an uninterrupted one.
class Trainer {
 public:
  Trainer(SentiModel& model, TrainingConfig config);

  const TrainingConfig& config() const { return config_; }
  optim::AdamW& optimizer() { return optimizer_; }

  /// Restores parameters, optimizer state and progress counters.
  void resume(const Checkpoint& checkpoint);

  /// One epoch of optimizer steps; returns mean losses.
  LossReport run_epoch(const data::Dataset& train, int epoch, const TrainHooks& hooks = {});

  TrainResult fit(const data::Dataset& train, const data::Dataset& valid, const TrainHooks& hooks = {});

  /// Checkpoint metadata (config JSON and hash) stamped into every snapshot.
  void set_run_config(std::string run_config) { run_config_ = std::move(run_config); }

 private:
  Checkpoint make_checkpoint() const;

  SentiModel* model_;
  TrainingConfig config_;
  optim::AdamW optimizer_;
  std::string run_config_;
  int start_epoch_ = 0;
  int total_steps_ = 0;
  std::optional<Real> best_mae_;
  int stale_epochs_ = 0;
  std::optional<Checkpoint> best_;
};

/// Names the first non-finite loss term, or returns nullopt.
std::optional<std::string> first_non_finite(const LossReport& report);

}  // namespace ifusion::train
