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

#include "ifusion/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "ifusion/random.hpp"
#include "json.hpp"

namespace ifusion::data {

namespace fs = std::filesystem;
using Index = Eigen::Index;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

Dataset::Dataset(Split split, PerModality<ModalityDims> dims, std::vector<UtteranceSample> samples)
    : split_(split), dims_(dims), samples_(std::move(samples)) {
  if (samples_.empty()) throw ConfigError("dataset split '" + std::string(split_name(split)) + "' is empty");
  for (Modality m : kAllModalities) {
    const auto& d = dims_[index_of(m)];
    if (d.steps <= 0 || d.features <= 0) {
      throw ConfigError("modality " + std::string(short_name(m)) + " has non-positive dims");
    }
  }
  std::unordered_set<std::string> ids;
  for (const auto& s : samples_) {
    if (!ids.insert(s.id).second) throw ConfigError("duplicate sample id '" + s.id + "'");
    if (!std::isfinite(s.label) || s.label < -3.0 || s.label > 3.0) {
      throw ConfigError("sample '" + s.id + "' label outside [-3, 3]");
    }
    for (Modality m : kAllModalities) {
      const auto& f = s.features[index_of(m)];
      const auto& d = dims_[index_of(m)];
      if (f.rows() != d.steps || f.cols() != d.features) {
        throw ConfigError("sample '" + s.id + "' modality " + std::string(short_name(m)) +
                          " has shape [" + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                          "], expected [" + std::to_string(d.steps) + "x" + std::to_string(d.features) + "]");
      }
      if (!f.allFinite()) {
        throw ConfigError("sample '" + s.id + "' modality " + std::string(short_name(m)) +
                          " has non-finite entries");
      }
    }
  }
}

Real Dataset::mean_label() const {
  Real acc = 0.0;
  for (const auto& s : samples_) acc += s.label;
  return acc / static_cast<Real>(samples_.size());
}

void SyntheticSpec::validate() const {
  if (latent_dim < 1) throw ConfigError("synthetic.latent_dim must be >= 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ConfigError("synthetic.noise_scale must be >= 0");
  if (!(private_scale >= 0.0)) throw ConfigError("synthetic.private_scale must be >= 0");
  if (n_train == 0 || n_valid == 0 || n_test == 0) throw ConfigError("synthetic split sizes must be positive");
  for (Modality m : kAllModalities) {
    const auto& d = dims[index_of(m)];
    if (d.steps <= 0 || d.features <= 0) {
      throw ConfigError("synthetic dims for modality " + std::string(short_name(m)) + " must be positive");
    }
  }
  if (!label_weights.empty() && label_weights.size() != static_cast<std::size_t>(latent_dim)) {
    throw ConfigError("synthetic.label_weights must have latent_dim entries");
  }
  auto check_maps = [&](const std::optional<PerModality<Matrix>>& maps, const char* what) {
    if (!maps) return;
    for (Modality m : kAllModalities) {
      const Matrix& a = (*maps)[index_of(m)];
      if (a.rows() != dims[index_of(m)].features || a.cols() != latent_dim) {
        throw ConfigError(std::string("synthetic ") + what + " for modality " +
                          std::string(short_name(m)) + " must be [d_m x latent_dim]");
      }
    }
  };
  check_maps(shared_maps, "shared map");
  check_maps(private_maps, "private map");
}

std::vector<Real> SyntheticSpec::resolved_label_weights() const {
  if (!label_weights.empty()) return label_weights;
  std::vector<Real> w(static_cast<std::size_t>(latent_dim));
  const Real mag = 1.5 / std::sqrt(static_cast<Real>(latent_dim));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i % 2 == 0 ? mag : -mag);
  return w;
}

namespace {

PerModality<Matrix> generated_maps(const SyntheticSpec& spec, std::string_view tag, Real scale) {
  PerModality<Matrix> maps;
  const Real norm = scale / std::sqrt(static_cast<Real>(spec.latent_dim));
  for (Modality m : kAllModalities) {
    CounterRng rng(spec.seed, {CounterRng::tag(tag), index_of(m)});
    Matrix a(spec.dims[index_of(m)].features, spec.latent_dim);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal() * norm;
    maps[index_of(m)] = std::move(a);
  }
  return maps;
}

std::size_t split_count(const SyntheticSpec& spec, Split split) {
  switch (split) {
    case Split::kTrain: return spec.n_train;
    case Split::kValid: return spec.n_valid;
    case Split::kTest: return spec.n_test;
  }
  return 0;
}

}  // namespace

PerModality<Matrix> SyntheticSpec::resolved_shared_maps() const {
  return shared_maps ? *shared_maps : generated_maps(*this, "shared_map", 1.0);
}

PerModality<Matrix> SyntheticSpec::resolved_private_maps() const {
  return private_maps ? *private_maps : generated_maps(*this, "private_map", private_scale);
}

Dataset generate_synthetic_split(const SyntheticSpec& spec, Split split) {
  spec.validate();
  const auto w = spec.resolved_label_weights();
  const auto shared = spec.resolved_shared_maps();
  const auto priv = spec.resolved_private_maps();
  const auto k = static_cast<Index>(spec.latent_dim);
  const std::size_t n = split_count(spec, split);

  std::vector<UtteranceSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(spec.seed, {CounterRng::tag("sample"), static_cast<std::uint64_t>(split), i});
    Vector zs(k);
    for (Index j = 0; j < k; ++j) zs(j) = rng.normal();
    PerModality<Vector> zp;
    for (Modality m : kAllModalities) {
      zp[index_of(m)].resize(k);
      for (Index j = 0; j < k; ++j) zp[index_of(m)](j) = rng.normal();
    }

    UtteranceSample s;
    Real y = 0.0;
    for (Index j = 0; j < k; ++j) y += w[static_cast<std::size_t>(j)] * zs(j);
    s.label = std::clamp(y, -3.0, 3.0);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%05zu", i);
    s.id = std::string(split_name(split)) + buf;

    for (Modality m : kAllModalities) {
      const auto& d = spec.dims[index_of(m)];
      Matrix eps(d.steps, d.features);
      for (Index t = 0; t < d.steps; ++t) {
        for (Index f = 0; f < d.features; ++f) eps(t, f) = rng.normal();
      }
      if (spec.smooth_noise && d.steps > 1) {
        Matrix smoothed(d.steps, d.features);
        for (Index t = 0; t < d.steps; ++t) {
          const Index lo = std::max<Index>(0, t - 1);
          const Index hi = std::min<Index>(d.steps - 1, t + 1);
          smoothed.row(t) = eps.middleRows(lo, hi - lo + 1).colwise().mean();
        }
        eps = std::move(smoothed);
      }
      const Vector base = shared[index_of(m)] * zs + priv[index_of(m)] * zp[index_of(m)];
      MatrixF x(d.steps, d.features);
      for (Index t = 0; t < d.steps; ++t) {
        for (Index f = 0; f < d.features; ++f) {
          x(t, f) = static_cast<float>(base(f) + spec.noise_scale * eps(t, f));
        }
      }
      s.features[index_of(m)] = std::move(x);
    }
    samples.push_back(std::move(s));
  }
  return Dataset(split, spec.dims, std::move(samples));
}

DatasetSplits generate_synthetic_dataset(const SyntheticSpec& spec) {
  return DatasetSplits{generate_synthetic_split(spec, Split::kTrain),
                       generate_synthetic_split(spec, Split::kValid),
                       generate_synthetic_split(spec, Split::kTest)};
}

void write_feature_archive(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["split"] = split_name(dataset.split());
  manifest["count"] = dataset.size();
  for (Modality m : kAllModalities) {
    const auto& d = dataset.dims()[index_of(m)];
    manifest["modalities"][std::string(short_name(m))] = {{"steps", d.steps}, {"features", d.features}};
  }
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : dataset.samples()) samples.push_back({{"id", s.id}, {"label", s.label}});
  manifest["samples"] = std::move(samples);
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw LoadError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
  }
  for (Modality m : kAllModalities) {
    const fs::path file = dir / (std::string(short_name(m)) + ".bin");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw LoadError("cannot write " + file.string());
    for (const auto& s : dataset.samples()) {
      const MatrixF& f = s.features[index_of(m)];
      out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
    }
  }
}

Dataset load_feature_archive(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  try {
    const Split split = parse_split(manifest.at("split").get<std::string>());
    const auto count = manifest.at("count").get<std::size_t>();
    const auto& entries = manifest.at("samples");
    if (!entries.is_array() || entries.size() != count) {
      throw LoadError(manifest_path.string() + ": sample list length differs from count");
    }
    PerModality<ModalityDims> dims;
    for (Modality m : kAllModalities) {
      const auto& md = manifest.at("modalities").at(std::string(short_name(m)));
      dims[index_of(m)] = ModalityDims{md.at("steps").get<Index>(), md.at("features").get<Index>()};
      if (dims[index_of(m)].steps <= 0 || dims[index_of(m)].features <= 0) {
        throw LoadError(manifest_path.string() + ": non-positive dims for " + std::string(short_name(m)));
      }
    }

    std::vector<UtteranceSample> samples(count);
    for (std::size_t i = 0; i < count; ++i) {
      samples[i].id = entries[i].at("id").get<std::string>();
      samples[i].label = entries[i].at("label").get<Real>();
    }
    for (Modality m : kAllModalities) {
      const fs::path file = dir / (std::string(short_name(m)) + ".bin");
      std::ifstream bin(file, std::ios::binary);
      if (!bin) throw LoadError("missing feature file: " + file.string());
      const auto& d = dims[index_of(m)];
      const std::uintmax_t expected =
          static_cast<std::uintmax_t>(count) * static_cast<std::uintmax_t>(d.steps * d.features) * 4U;
      const std::uintmax_t actual = fs::file_size(file);
      if (actual != expected) {
        throw LoadError(file.string() + ": size " + std::to_string(actual) + " bytes does not match manifest dims (" +
                        std::to_string(expected) + " bytes expected)");
      }
      for (auto& s : samples) {
        MatrixF f(d.steps, d.features);
        bin.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
        if (!bin) throw LoadError(file.string() + ": truncated read");
        if (!f.allFinite()) {
          throw LoadError(file.string() + ": sample '" + s.id + "' contains non-finite values");
        }
        s.features[index_of(m)] = std::move(f);
      }
    }
    return Dataset(split, dims, std::move(samples));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest " + manifest_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
}

void write_archive_splits(const DatasetSplits& splits, const fs::path& root) {
  write_feature_archive(splits.train, root / "train");
  write_feature_archive(splits.valid, root / "valid");
  write_feature_archive(splits.test, root / "test");
}

DatasetSplits load_archive_splits(const fs::path& root) {
  return DatasetSplits{load_feature_archive(root / "train"), load_feature_archive(root / "valid"),
                       load_feature_archive(root / "test")};
}

Batch assemble_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch b;
  b.indices.assign(indices.begin(), indices.end());
  const auto n = static_cast<Index>(indices.size());
  b.labels.resize(n);
  for (Modality m : kAllModalities) {
    const auto& d = dataset.dims()[index_of(m)];
    b.features[index_of(m)].resize(n * d.steps, d.features);
  }
  for (Index i = 0; i < n; ++i) {
    const auto& s = dataset[indices[static_cast<std::size_t>(i)]];
    b.labels(i) = s.label;
    for (Modality m : kAllModalities) {
      const auto steps = dataset.dims()[index_of(m)].steps;
      b.features[index_of(m)].middleRows(i * steps, steps) = s.features[index_of(m)].cast<Real>();
    }
  }
  return b;
}

BatchIterator::BatchIterator(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

std::vector<std::size_t> BatchIterator::permutation(int epoch) const {
  std::vector<std::size_t> order(dataset_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!shuffle_) return order;
  CounterRng rng(seed_, {CounterRng::tag("shuffle"), static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_indices(int epoch) const {
  const auto order = permutation(epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> BatchIterator::epoch(int epoch) const {
  std::vector<Batch> out;
  for (const auto& idx : epoch_indices(epoch)) out.push_back(assemble_batch(*dataset_, idx));
  return out;
}

}  // namespace ifusion::data
