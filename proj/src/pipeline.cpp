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

#include "ifusion/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "ifusion/random.hpp"

namespace ifusion::pipeline {

namespace fs = std::filesystem;

data::DatasetSplits load_data(const config::RunConfig& run) {
  if (run.data.kind == config::DataSource::Kind::kArchive) return data::load_archive_splits(run.data.archive);
  return data::generate_synthetic_dataset(run.data.synthetic);
}

data::Dataset load_split(const fs::path& archive, data::Split split) {
  if (fs::exists(archive / "manifest.json")) return data::load_feature_archive(archive);
  return data::load_feature_archive(archive / std::string(data::split_name(split)));
}

ModelConfig model_config_for(const config::RunConfig& run, const data::Dataset& reference) {
  ModelConfig m = run.model;
  m.input_dims = reference.dims();
  m.validate();
  return m;
}

void write_resolved_config(const config::RunConfig& run, const fs::path& dir) {
  fs::create_directories(dir);
  config::Json j = run.to_json();
  j["config_hash"] = config::hex64(run.hash());
  eval::write_text(dir / "config.json", j.dump(2) + "\n");
}

config::RunConfig run_config_of(const train::Checkpoint& checkpoint) {
  if (checkpoint.run_config.empty()) throw LoadError("checkpoint carries no run config");
  return config::parse_config_text(checkpoint.run_config);
}

missing::MissingPlan evaluation_plan(const data::Dataset& dataset, Real drop_rate, std::uint64_t seed) {
  PerModality<Eigen::Index> steps{};
  for (Modality m : kAllModalities) steps[index_of(m)] = dataset.dims()[index_of(m)].steps;
  missing::MissingnessOptions o;
  o.drop_rate = drop_rate;
  return missing::sample_missing_plan(dataset.size(), steps, o,
                                      CounterRng::derive_key(seed, {CounterRng::tag("eval_plan")}));
}

train::TrainResult run_training(const config::RunConfig& run, const data::DatasetSplits& splits, const fs::path& out,
                                const std::optional<fs::path>& resume) {
  write_resolved_config(run, out);
  SentiModel model(model_config_for(run, splits.train));
  train::Trainer trainer(model, run.training);
  trainer.set_run_config(run.canonical());
  if (resume) {
    const train::Checkpoint c = train::load_checkpoint(*resume);
    if (c.run_config != run.canonical()) {
      throw ConfigError("resume checkpoint was written under a different config (hash " +
                        config::hex64(config::fnv1a(c.run_config)) + " vs " + config::hex64(run.hash()) + ")");
    }
    trainer.resume(c);
  }

  std::ofstream log(out / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("io_error", "cannot write " + (out / "train_log.jsonl").string());
  train::TrainHooks hooks;
  hooks.on_epoch = [&](const train::EpochLog& e) {
    log << e.to_json() << "\n";
    log.flush();
  };
  train::TrainResult result = trainer.fit(splits.train, splits.valid, hooks);
  train::save_checkpoint(result.last, out / "last.ckpt");
  // A resumed run that never improved keeps the best checkpoint on disk.
  const bool improved = std::any_of(result.log.begin(), result.log.end(), [](const auto& e) { return e.improved; });
  if (improved || !fs::exists(out / "best.ckpt")) train::save_checkpoint(result.best, out / "best.ckpt");

  auto best = train::model_from_checkpoint(train::load_checkpoint(out / "best.ckpt"));
  std::vector<std::pair<std::string, eval::MetricReport>> rows;
  for (const auto* split : {&splits.valid, &splits.test}) {
    const auto plan = evaluation_plan(*split, run.evaluation.drop_rate, run.training.seed);
    const auto p = eval::predict(*best, *split, plan, run.training.batch_size);
    rows.emplace_back(std::string(data::split_name(split->split())),
                      eval::compute_metrics(p.predicted, p.labels, run.evaluation.f1));
  }
  eval::write_text(out / "metrics.csv", eval::metrics_csv(rows));
  return result;
}

}  // namespace ifusion::pipeline
