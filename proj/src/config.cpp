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

#include "ifusion/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ifusion::config {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

/// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    out = convert<T>(*it, name(key));
  }

  void get_optional(const std::string& key, std::optional<Real>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    out = convert<Real>(*it, name(key));
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + name(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config document" : "'" + path_ + "'"; }

  template <typename T>
  static T convert(const Json& v, const std::string& key) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("'" + key + "' must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) throw ConfigError("'" + key + "' must be non-negative");
        return static_cast<T>(v.get<std::int64_t>());
      } else {
        return static_cast<T>(v.get<std::int64_t>());
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool finite_nonneg(Real v) { return std::isfinite(v) && v >= 0.0; }

Json dims_to_json(const PerModality<data::ModalityDims>& dims) {
  Json j = Json::object();
  for (Modality m : kAllModalities) {
    const auto& d = dims[index_of(m)];
    j[std::string(short_name(m))] = {{"steps", d.steps}, {"features", d.features}};
  }
  return j;
}

PerModality<data::ModalityDims> dims_from_json(const Json& j, const std::string& path,
                                               PerModality<data::ModalityDims> dims) {
  Section s(j, path);
  for (Modality m : kAllModalities) {
    const std::string mod(short_name(m));
    if (const Json* c = s.child(mod)) {
      Section d(*c, s.name(mod));
      d.get("steps", dims[index_of(m)].steps);
      d.get("features", dims[index_of(m)].features);
      d.finish();
    }
  }
  s.finish();
  return dims;
}

Json model_fields(const ModelConfig& c) {
  return {{"steps", c.steps},
          {"width", c.width},
          {"heads", c.heads},
          {"feedforward", c.feedforward},
          {"dropout", c.dropout},
          {"embed_depth", c.embed_depth},
          {"integrity_depth", c.integrity_depth},
          {"disentangle_depth", c.disentangle_depth},
          {"decoder_depth", c.decoder_depth},
          {"predictor_depth", c.predictor_depth},
          {"unknown_value", c.unknown_value},
          {"similarity", std::string(similarity_mode_name(c.similarity))}};
}

void read_model_fields(Section& s, ModelConfig& c) {
  s.get("steps", c.steps);
  s.get("width", c.width);
  s.get("heads", c.heads);
  s.get("feedforward", c.feedforward);
  s.get("dropout", c.dropout);
  s.get("embed_depth", c.embed_depth);
  s.get("integrity_depth", c.integrity_depth);
  s.get("disentangle_depth", c.disentangle_depth);
  s.get("decoder_depth", c.decoder_depth);
  s.get("predictor_depth", c.predictor_depth);
  s.get("unknown_value", c.unknown_value);
  std::string similarity(similarity_mode_name(c.similarity));
  s.get("similarity", similarity);
  c.similarity = parse_similarity_mode(similarity);
}

Json training_to_json(const train::TrainingConfig& c) {
  const auto& w = c.weights;
  return {{"seed", c.seed},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"stage1_epochs", c.stage1_epochs},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"alpha", w.alpha},
          {"beta", w.beta},
          {"sigma", w.sigma},
          {"decoder_weights",
           {{"mse_global", w.decoder.mse_global},
            {"mi_global", w.decoder.mi_global},
            {"mse_semantic", w.decoder.mse_semantic},
            {"mi_semantic", w.decoder.mi_semantic}}},
          {"warmup_epochs", c.warmup_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"drop_rate", c.drop_rate},
          {"intra_ratio", c.intra_ratio ? Json(*c.intra_ratio) : Json(nullptr)},
          {"resample_missing", c.resample_missing},
          {"grad_clip", c.grad_clip},
          {"ablation",
           {{"integrity_weighting", c.ablation.integrity_weighting},
            {"loss_integrity", c.ablation.loss_integrity},
            {"loss_rec_enc", c.ablation.loss_rec_enc},
            {"loss_rec_dec", c.ablation.loss_rec_dec}}}};
}

void read_training(const Json& j, train::TrainingConfig& c) {
  Section s(j, "training");
  s.get("seed", c.seed);
  s.get("batch_size", c.batch_size);
  s.get("epochs", c.epochs);
  s.get("stage1_epochs", c.stage1_epochs);
  s.get("lr", c.lr);
  s.get("weight_decay", c.weight_decay);
  s.get("alpha", c.weights.alpha);
  s.get("beta", c.weights.beta);
  s.get("sigma", c.weights.sigma);
  if (const Json* d = s.child("decoder_weights")) {
    Section dw(*d, "training.decoder_weights");
    dw.get("mse_global", c.weights.decoder.mse_global);
    dw.get("mi_global", c.weights.decoder.mi_global);
    dw.get("mse_semantic", c.weights.decoder.mse_semantic);
    dw.get("mi_semantic", c.weights.decoder.mi_semantic);
    dw.finish();
  }
  s.get("warmup_epochs", c.warmup_epochs);
  s.get("early_stop_patience", c.early_stop_patience);
  s.get("drop_rate", c.drop_rate);
  s.get_optional("intra_ratio", c.intra_ratio);
  s.get("resample_missing", c.resample_missing);
  s.get("grad_clip", c.grad_clip);
  if (const Json* a = s.child("ablation")) {
    Section ab(*a, "training.ablation");
    ab.get("integrity_weighting", c.ablation.integrity_weighting);
    ab.get("loss_integrity", c.ablation.loss_integrity);
    ab.get("loss_rec_enc", c.ablation.loss_rec_enc);
    ab.get("loss_rec_dec", c.ablation.loss_rec_dec);
    ab.finish();
  }
  s.finish();
}

Json synthetic_to_json(const data::SyntheticSpec& s) {
  return {{"n_train", s.n_train},
          {"n_valid", s.n_valid},
          {"n_test", s.n_test},
          {"latent_dim", s.latent_dim},
          {"dims", dims_to_json(s.dims)},
          {"label_weights", s.label_weights},
          {"private_scale", s.private_scale},
          {"noise_scale", s.noise_scale},
          {"smooth_noise", s.smooth_noise}};
}

void read_synthetic(const Json& j, data::SyntheticSpec& spec) {
  Section s(j, "data.synthetic");
  s.get("n_train", spec.n_train);
  s.get("n_valid", spec.n_valid);
  s.get("n_test", spec.n_test);
  s.get("latent_dim", spec.latent_dim);
  if (const Json* d = s.child("dims")) spec.dims = dims_from_json(*d, "data.synthetic.dims", spec.dims);
  if (const Json* w = s.child("label_weights")) {
    require(w->is_array(), "'data.synthetic.label_weights' must be an array of numbers");
    spec.label_weights.clear();
    for (const auto& v : *w) {
      require(v.is_number(), "'data.synthetic.label_weights' must be an array of numbers");
      spec.label_weights.push_back(v.get<Real>());
    }
  }
  s.get("private_scale", spec.private_scale);
  s.get("noise_scale", spec.noise_scale);
  s.get("smooth_noise", spec.smooth_noise);
  s.finish();
}

void validate_run(const RunConfig& c) {
  c.training.validate();
  c.model.validate();
  if (c.data.kind == DataSource::Kind::kArchive) {
    require(!c.data.archive.empty(), "'data.archive' is required when data.source is \"archive\"");
  } else {
    c.data.synthetic.validate();
  }
  const auto& e = c.evaluation;
  require(e.drop_rate >= 0.0 && e.drop_rate <= 1.0, "'evaluation.drop_rate' must lie in [0, 1]");
  require(finite_nonneg(e.case_own_tol), "'evaluation.case_own_tol' must be >= 0");
  require(finite_nonneg(e.case_base_tol), "'evaluation.case_base_tol' must be >= 0");
  require(!c.output_dir.empty(), "'output_dir' must not be empty");
}

}  // namespace

Json model_to_json(const ModelConfig& c) {
  Json j = model_fields(c);
  j["input_dims"] = dims_to_json(c.input_dims);
  j["init_seed"] = c.init_seed;
  j["integrity_weighting"] = c.integrity_weighting;
  return j;
}

ModelConfig model_from_json(const Json& j) {
  ModelConfig c;
  Section s(j, "model");
  read_model_fields(s, c);
  if (const Json* d = s.child("input_dims")) c.input_dims = dims_from_json(*d, "model.input_dims", c.input_dims);
  s.get("init_seed", c.init_seed);
  s.get("integrity_weighting", c.integrity_weighting);
  s.finish();
  c.validate();
  return c;
}

Json RunConfig::to_json() const {
  Json data_j = {{"source", data.kind == DataSource::Kind::kArchive ? "archive" : "synthetic"},
                 {"archive", data.archive.string()},
                 {"synthetic", synthetic_to_json(data.synthetic)}};
  Json eval_j = {{"f1", std::string(eval::f1_mode_name(evaluation.f1))},
                 {"drop_rate", evaluation.drop_rate},
                 {"case_own_tol", evaluation.case_own_tol},
                 {"case_base_tol", evaluation.case_base_tol}};
  return {{"training", training_to_json(training)},
          {"model", model_fields(model)},
          {"data", data_j},
          {"evaluation", eval_j},
          {"output_dir", output_dir}};
}

std::string RunConfig::canonical() const { return to_json().dump(); }

std::uint64_t RunConfig::hash() const { return fnv1a(canonical()); }

RunConfig parse_config(const Json& document) {
  RunConfig c;
  Section top(document, "");
  if (const Json* t = top.child("training")) read_training(*t, c.training);
  if (const Json* m = top.child("model")) {
    Section s(*m, "model");
    read_model_fields(s, c.model);
    s.finish();
  }
  if (const Json* d = top.child("data")) {
    Section s(*d, "data");
    std::string source = "synthetic";
    s.get("source", source);
    if (source == "synthetic") {
      c.data.kind = DataSource::Kind::kSynthetic;
    } else if (source == "archive") {
      c.data.kind = DataSource::Kind::kArchive;
    } else {
      throw ConfigError("'data.source' must be \"synthetic\" or \"archive\", got \"" + source + "\"");
    }
    std::string archive;
    s.get("archive", archive);
    c.data.archive = archive;
    if (const Json* syn = s.child("synthetic")) read_synthetic(*syn, c.data.synthetic);
    s.finish();
  }
  if (const Json* e = top.child("evaluation")) {
    Section s(*e, "evaluation");
    std::string f1(eval::f1_mode_name(c.evaluation.f1));
    s.get("f1", f1);
    c.evaluation.f1 = eval::parse_f1_mode(f1);
    s.get("drop_rate", c.evaluation.drop_rate);
    s.get("case_own_tol", c.evaluation.case_own_tol);
    s.get("case_base_tol", c.evaluation.case_base_tol);
    s.finish();
  }
  top.get("output_dir", c.output_dir);
  top.finish();

  // One master seed.
  c.model.init_seed = c.training.seed;
  c.model.integrity_weighting = c.training.ablation.integrity_weighting;
  c.data.synthetic.seed = c.training.seed;
  c.training.f1 = c.evaluation.f1;
  if (c.data.kind == DataSource::Kind::kSynthetic) c.model.input_dims = c.data.synthetic.dims;
  validate_run(c);
  return c;
}

RunConfig parse_config_text(std::string_view text) {
  Json doc;
  try {
    doc = text.find_first_not_of(" \t\r\n") == std::string_view::npos ? Json::object() : Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(Json& document, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  if (!document.is_object()) document = Json::object();
  Json* node = &document;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override key '" + path + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    Json& next = (*node)[key];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw ConfigError("override key '" + path + "' descends into a non-object");
    node = &next;
    start = dot + 1;
  }
}

}  // namespace ifusion::config
