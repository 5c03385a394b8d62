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

#include "ifusion/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ifusion/config.hpp"
#include "ifusion/random.hpp"
#include "ifusion/serialize.hpp"

namespace ifusion::train {

using Index = Eigen::Index;

void TrainingConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) throw ConfigError(message);
  };
  require(batch_size >= 1, "'training.batch_size' must be >= 1");
  require(epochs >= 1, "'training.epochs' must be >= 1");
  require(stage1_epochs >= 0 && stage1_epochs <= epochs, "'training.stage1_epochs' must lie in [0, epochs]");
  require(std::isfinite(lr) && lr > 0.0, "'training.lr' must be > 0");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, "'training.weight_decay' must be >= 0");
  for (Real w : {weights.alpha, weights.beta, weights.sigma, weights.decoder.mse_global, weights.decoder.mi_global,
                 weights.decoder.mse_semantic, weights.decoder.mi_semantic}) {
    require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and >= 0");
  }
  require(warmup_epochs >= 0, "'training.warmup_epochs' must be >= 0");
  require(early_stop_patience >= 0, "'training.early_stop_patience' must be >= 0");
  require(drop_rate >= 0.0 && drop_rate <= 1.0, "'training.drop_rate' must lie in [0, 1]");
  require(!intra_ratio || (*intra_ratio >= 0.0 && *intra_ratio <= 1.0), "'training.intra_ratio' must lie in [0, 1]");
  require(std::isfinite(grad_clip) && grad_clip >= 0.0, "'training.grad_clip' must be >= 0");
}

missing::MissingnessOptions TrainingConfig::missingness() const {
  missing::MissingnessOptions o;
  o.drop_rate = drop_rate;
  o.fixed_intra_ratio = intra_ratio;
  return o;
}

LossParts parts_of(const LossReport& report) {
  LossParts p;
  p.integrity = report.integrity;
  p.rec = report.rec;
  if (report.has_prediction) p.prediction = report.prediction;
  return p;
}

Real total_loss(int stage, const LossParts& parts, const LossWeights& weights) {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (!parts.integrity) throw ConfigError("total_loss: integrity loss missing");
  if (!parts.rec) throw ConfigError("total_loss: completion loss missing");
  Real total = weights.alpha * *parts.integrity + weights.beta * *parts.rec;
  if (stage == 2) {
    if (!parts.prediction) throw ConfigError("total_loss: stage 2 needs the prediction loss");
    total += weights.sigma * *parts.prediction;
  }
  return total;
}

std::set<nn::ParamGroup> stage_parameter_mask(int stage) {
  if (stage == 1) return {nn::ParamGroup::kEmbeddingProjection, nn::ParamGroup::kIntegrity};
  if (stage == 2) return {nn::kAllGroups.begin(), nn::kAllGroups.end()};
  throw ConfigError("stage must be 1 or 2");
}

namespace {

PerModality<Index> steps_of(const data::Dataset& d) {
  PerModality<Index> steps{};
  for (Modality m : kAllModalities) steps[index_of(m)] = d.dims()[index_of(m)].steps;
  return steps;
}

}  // namespace

missing::MissingPlan training_plan(const TrainingConfig& c, const data::Dataset& train, int epoch) {
  const std::uint64_t seed =
      c.resample_missing
          ? CounterRng::derive_key(c.seed, {CounterRng::tag("train_plan"), static_cast<std::uint64_t>(epoch)})
          : CounterRng::derive_key(c.seed, {CounterRng::tag("train_plan")});
  return missing::sample_missing_plan(train.size(), steps_of(train), c.missingness(), seed);
}

missing::MissingPlan validation_plan(const TrainingConfig& c, const data::Dataset& valid) {
  return missing::sample_missing_plan(valid.size(), steps_of(valid), c.missingness(),
                                      CounterRng::derive_key(c.seed, {CounterRng::tag("valid_plan")}));
}

// Checkpoints.

namespace {

constexpr char kMagic[8] = {'I', 'F', 'U', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t checkpoint_hash(const Checkpoint& c) {
  return config::fnv1a(c.model_config + "\n" + c.run_config);
}

}  // namespace

Checkpoint snapshot(const SentiModel& model, const optim::AdamW* optimizer) {
  Checkpoint c;
  c.model_config = config::model_to_json(model.config()).dump();
  for (const auto& p : model.store().parameters()) c.parameters.emplace_back(p.name, p.tensor.value());
  if (optimizer != nullptr) {
    std::ostringstream out(std::ios::binary);
    optimizer->save(out);
    c.optimizer_state = out.str();
  }
  c.config_hash = checkpoint_hash(c);
  return c;
}

void restore(SentiModel& model, const Checkpoint& checkpoint) {
  auto& params = model.store().parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw LoadError("checkpoint holds " + std::to_string(checkpoint.parameters.size()) + " tensors, model has " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = checkpoint.parameters[i];
    ag::Tensor& t = params[i].tensor;
    if (name != params[i].name) throw LoadError("checkpoint tensor " + name + " where " + params[i].name + " expected");
    if (value.rows() != t.rows() || value.cols() != t.cols()) throw LoadError("checkpoint tensor " + name + " has the wrong shape");
    t.mutable_value() = value;
  }
}

std::unique_ptr<SentiModel> model_from_checkpoint(const Checkpoint& checkpoint) {
  config::Json j;
  try {
    j = config::Json::parse(checkpoint.model_config);
  } catch (const config::Json::parse_error& e) {
    throw LoadError(std::string("checkpoint model config is not valid JSON: ") + e.what());
  }
  auto model = std::make_unique<SentiModel>(config::model_from_json(j));
  restore(*model, checkpoint);
  return model;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write then rename so a crash never leaves a truncated checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    io::write_pod(out, kVersion);
    io::write_string(out, c.model_config);
    io::write_string(out, c.run_config);
    io::write_pod(out, checkpoint_hash(c));
    io::write_pod<std::int32_t>(out, c.epoch);
    io::write_pod(out, c.best_valid_mae);
    io::write_pod<std::uint8_t>(out, c.has_best ? 1 : 0);
    io::write_pod<std::int32_t>(out, c.stale_epochs);
    io::write_pod<std::uint64_t>(out, c.parameters.size());
    for (const auto& [name, value] : c.parameters) {
      io::write_string(out, name);
      io::write_matrix(out, value);
    }
    io::write_string(out, c.optimizer_state);
    if (!out) throw Error("io_error", "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  try {
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
      throw LoadError("not a checkpoint file");
    }
    if (io::read_pod<std::uint32_t>(in) != kVersion) throw LoadError("unsupported checkpoint version");
    Checkpoint c;
    c.model_config = io::read_string(in);
    c.run_config = io::read_string(in);
    c.config_hash = io::read_pod<std::uint64_t>(in);
    if (c.config_hash != checkpoint_hash(c)) throw LoadError("config hash mismatch");
    c.epoch = io::read_pod<std::int32_t>(in);
    c.best_valid_mae = io::read_pod<Real>(in);
    c.has_best = io::read_pod<std::uint8_t>(in) != 0;
    c.stale_epochs = io::read_pod<std::int32_t>(in);
    const auto n = io::read_pod<std::uint64_t>(in);
    if (n > 100000) throw LoadError("implausible tensor count");
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = io::read_string(in);
      Matrix value = io::read_matrix(in);
      c.parameters.emplace_back(std::move(name), std::move(value));
    }
    c.optimizer_state = io::read_string(in);
    return c;
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

// Training loop.

std::optional<std::string> first_non_finite(const LossReport& report) {
  for (const auto& [name, value] : report.fields()) {
    if (!std::isfinite(value)) return name;
  }
  return std::nullopt;
}

std::string EpochLog::to_json() const {
  config::Json j;
  j["epoch"] = epoch;
  j["stage"] = stage;
  j["lr"] = lr;
  for (const auto& [name, value] : losses.fields()) j[name] = value;
  j["valid_integrity_mse"] = valid_integrity_mse;
  if (valid) {
    auto opt = [](const std::optional<Real>& v) { return v ? config::Json(*v) : config::Json(nullptr); };
    j["valid_mae"] = valid->mae;
    j["valid_acc7"] = valid->acc7;
    j["valid_acc5"] = valid->acc5;
    j["valid_acc2_nonzero"] = opt(valid->acc2_nonzero);
    j["valid_f1_nonzero"] = opt(valid->f1_nonzero);
  }
  j["improved"] = improved;
  j["seconds"] = seconds;
  return j.dump();
}

Trainer::Trainer(SentiModel& model, TrainingConfig config)
    : model_(&model), config_(std::move(config)), optimizer_(model.store(), {0.9, 0.999, 1e-8, config_.weight_decay}) {
  config_.validate();
}

void Trainer::resume(const Checkpoint& checkpoint) {
  restore(*model_, checkpoint);
  if (!checkpoint.optimizer_state.empty()) {
    std::istringstream in(checkpoint.optimizer_state, std::ios::binary);
    optimizer_.load(in);
  }
  start_epoch_ = checkpoint.epoch;
  if (checkpoint.has_best) best_mae_ = checkpoint.best_valid_mae;
  stale_epochs_ = checkpoint.stale_epochs;
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint c = snapshot(*model_, &optimizer_);
  c.run_config = run_config_;
  c.epoch = start_epoch_;
  c.has_best = best_mae_.has_value();
  c.best_valid_mae = best_mae_.value_or(0.0);
  c.stale_epochs = stale_epochs_;
  c.config_hash = config::fnv1a(c.model_config + "\n" + c.run_config);
  return c;
}

LossReport Trainer::run_epoch(const data::Dataset& train, int epoch, const TrainHooks& hooks) {
  const int stage = stage_of(epoch, config_);
  nn::ParameterStore& store = model_->store();
  store.set_trainable(stage_parameter_mask(stage));
  const Real lr = optim::learning_rate(epoch, config_.lr, config_.warmup_epochs, config_.epochs);

  const missing::MissingPlan plan = training_plan(config_, train, epoch);
  const data::BatchIterator batches(train, config_.batch_size,
                                    CounterRng::derive_key(config_.seed, {CounterRng::tag("batches")}), true);
  const Vector unknown = model_->unknown_vector();

  ForwardOptions options;
  options.training = true;
  options.stage = stage;
  options.compute_losses = true;
  options.weights = config_.weights;
  options.ablation = config_.ablation;

  LossReport sum;
  int count = 0;
  const auto groups = batches.epoch_indices(epoch);
  for (std::size_t b = 0; b < groups.size(); ++b) {
    if (hooks.max_steps > 0 && total_steps_ >= hooks.max_steps) break;
    const data::Batch batch = data::assemble_batch(train, groups[b]);
    const missing::CorruptedBatch corrupted = missing::apply_missingness(batch, plan.select(groups[b]), unknown);
    options.step_seed = CounterRng::derive_key(
        config_.seed, {CounterRng::tag("step"), static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b)});

    ModelOutputs out = model_->forward(corrupted, &batch, options);
    if (const auto bad = first_non_finite(out.report)) {
      throw DivergenceError("non-finite " + *bad + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b));
    }
    store.zero_grad();
    out.loss_total.backward();
    if (config_.grad_clip > 0.0) optimizer_.clip_grad_norm(config_.grad_clip);
    optimizer_.step(lr);
    ++total_steps_;

    const LossReport& r = out.report;
    sum.integrity += r.integrity;
    sum.similarity += r.similarity;
    sum.difference += r.difference;
    sum.rec_enc += r.rec_enc;
    sum.mse_global += r.mse_global;
    sum.mi_global += r.mi_global;
    sum.mse_semantic += r.mse_semantic;
    sum.mi_semantic += r.mi_semantic;
    sum.rec_dec += r.rec_dec;
    sum.rec += r.rec;
    sum.prediction += r.prediction;
    sum.has_prediction = r.has_prediction;
    sum.total += r.total;
    ++count;
    if (hooks.on_step) hooks.on_step(epoch, static_cast<int>(b));
  }
  store.zero_grad();
  if (count > 0) {
    const Real inv = 1.0 / count;
    for (Real* v : {&sum.integrity, &sum.similarity, &sum.difference, &sum.rec_enc, &sum.mse_global, &sum.mi_global,
                    &sum.mse_semantic, &sum.mi_semantic, &sum.rec_dec, &sum.rec, &sum.prediction, &sum.total}) {
      *v *= inv;
    }
  }
  return sum;
}

TrainResult Trainer::fit(const data::Dataset& train, const data::Dataset& valid, const TrainHooks& hooks) {
  TrainResult result;
  const missing::MissingPlan vplan = validation_plan(config_, valid);
  for (int epoch = start_epoch_; epoch < config_.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.stage = stage_of(epoch, config_);
    log.lr = optim::learning_rate(epoch, config_.lr, config_.warmup_epochs, config_.epochs);
    log.losses = run_epoch(train, epoch, hooks);
    start_epoch_ = epoch + 1;

    const eval::Predictions p = eval::predict(*model_, valid, vplan, config_.batch_size, log.stage == 1);
    log.valid_integrity_mse = (p.integrity_predicted - p.integrity_true).squaredNorm() /
                              static_cast<Real>(p.integrity_true.size());
    if (log.stage == 2) {
      log.valid = eval::compute_metrics(p.predicted, p.labels, config_.f1);
      const Real mae = log.valid->mae;
      if (!std::isfinite(mae)) throw DivergenceError("non-finite validation MAE at epoch " + std::to_string(epoch));
      if (!best_mae_ || mae < *best_mae_) {
        best_mae_ = mae;
        stale_epochs_ = 0;
        log.improved = true;
        best_ = make_checkpoint();
      } else {
        ++stale_epochs_;
      }
    }
    log.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);

    if (log.stage == 2 && config_.early_stop_patience > 0 && stale_epochs_ >= config_.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
    if (hooks.max_steps > 0 && total_steps_ >= hooks.max_steps) break;
  }
  result.last = make_checkpoint();
  result.best = best_ ? *best_ : result.last;
  return result;
}

}  // namespace ifusion::train
