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

#include "ifusion/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ifusion/random.hpp"
#include "json.hpp"

namespace ifusion::missing {

using Index = Eigen::Index;

MissingPlan MissingPlan::select(std::span<const std::size_t> indices) const {
  MissingPlan out;
  out.steps = steps;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw ShapeError("plan has no sample " + std::to_string(i));
    out.samples.push_back(samples[i]);
  }
  return out;
}

void MissingPlan::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SamplePlan& s = samples[i];
    bool any_present = false;
    for (Modality m : kAllModalities) {
      const auto mi = index_of(m);
      const auto& kept = s.kept[mi];
      if (static_cast<Index>(kept.size()) != steps[mi]) {
        throw ConfigError("plan sample " + std::to_string(i) + ": mask length mismatch");
      }
      const auto n_kept = std::count(kept.begin(), kept.end(), std::uint8_t{1});
      if (s.dropped[mi] && (n_kept != 0 || s.integrity[mi] != 0.0)) {
        throw ConfigError("plan sample " + std::to_string(i) + ": dropped modality has kept steps");
      }
      if (s.integrity[mi] != static_cast<Real>(n_kept) / static_cast<Real>(steps[mi])) {
        throw ConfigError("plan sample " + std::to_string(i) + ": integrity differs from kept/total");
      }
      any_present = any_present || !s.dropped[mi];
    }
    if (!any_present) throw ConfigError("plan sample " + std::to_string(i) + ": every modality dropped");
  }
}

Matrix MissingPlan::integrity_matrix() const {
  Matrix out(static_cast<Index>(samples.size()), 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (Modality m : kAllModalities) {
      out(static_cast<Index>(i), static_cast<Index>(index_of(m))) = samples[i].integrity[index_of(m)];
    }
  }
  return out;
}

PerModality<bool> drop_subset(int index) {
  switch (index) {
    case 0: return {true, false, false};
    case 1: return {false, true, false};
    case 2: return {false, false, true};
    case 3: return {true, true, false};
    case 4: return {true, false, true};
    case 5: return {false, true, true};
    default: throw ConfigError("drop subset index must be in 0..5");
  }
}

Index masked_count(Real ratio, Index steps) {
  const long k = round_half_away(ratio * static_cast<Real>(steps));
  return std::clamp<Index>(k, 0, steps);
}

namespace {

void fill_integrity(SamplePlan& s, const PerModality<Index>& steps) {
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    const auto n_kept = std::count(s.kept[mi].begin(), s.kept[mi].end(), std::uint8_t{1});
    s.integrity[mi] = static_cast<Real>(n_kept) / static_cast<Real>(steps[mi]);
  }
}

void check_steps(const PerModality<Index>& steps) {
  for (Index t : steps) {
    if (t <= 0) throw ConfigError("steps per modality must be positive");
  }
}

}  // namespace

MissingPlan sample_missing_plan(std::size_t n, PerModality<Index> steps, const MissingnessOptions& options,
                                std::uint64_t seed) {
  if (!(options.drop_rate >= 0.0 && options.drop_rate <= 1.0)) {
    throw ConfigError("drop_rate must lie in [0, 1]");
  }
  if (options.fixed_intra_ratio && !(*options.fixed_intra_ratio >= 0.0 && *options.fixed_intra_ratio <= 1.0)) {
    throw ConfigError("intra missing ratio must lie in [0, 1]");
  }
  check_steps(steps);

  MissingPlan plan;
  plan.steps = steps;
  plan.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    SamplePlan& s = plan.samples[i];
    // Fixed draw layout per sample: [inter coin, subset, ratio_l, ratio_a, ratio_v].
    CounterRng rng(seed, {CounterRng::tag("inter"), i});
    const bool inter = rng.uniform() < options.drop_rate;
    const int subset = static_cast<int>(rng.below(6));
    if (inter) s.dropped = drop_subset(subset);

    for (Modality m : kAllModalities) {
      const auto mi = index_of(m);
      const Real drawn_ratio = rng.uniform();
      s.kept[mi].assign(static_cast<std::size_t>(steps[mi]), s.dropped[mi] ? 0 : 1);
      if (s.dropped[mi]) continue;
      const Real ratio = options.fixed_intra_ratio.value_or(drawn_ratio);
      const Index k = masked_count(ratio, steps[mi]);
      // Partial Fisher-Yates: the first k entries of the shuffled order are masked.
      std::vector<Index> order(static_cast<std::size_t>(steps[mi]));
      std::iota(order.begin(), order.end(), Index{0});
      CounterRng pick(seed, {CounterRng::tag("intra"), i, mi});
      for (Index j = 0; j < k; ++j) {
        const auto r = static_cast<Index>(pick.below(static_cast<std::uint64_t>(steps[mi] - j)));
        std::swap(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j + r)]);
        s.kept[mi][static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = 0;
      }
    }
    fill_integrity(s, steps);
  }
  return plan;
}

PerModality<bool> retained_modalities(int mode) {
  switch (mode) {
    case 0: return {false, true, true};
    case 1: return {true, false, true};
    case 2: return {true, true, false};
    case 3: return {false, false, true};
    case 4: return {false, true, false};
    case 5: return {true, false, false};
    default: throw ConfigError("mode must be in 0..5, got " + std::to_string(mode));
  }
}

MissingPlan mode_plan(int mode, std::size_t n, PerModality<Index> steps) {
  const auto retained = retained_modalities(mode);
  check_steps(steps);
  MissingPlan plan;
  plan.steps = steps;
  plan.samples.resize(n);
  for (auto& s : plan.samples) {
    for (Modality m : kAllModalities) {
      const auto mi = index_of(m);
      s.dropped[mi] = !retained[mi];
      s.kept[mi].assign(static_cast<std::size_t>(steps[mi]), retained[mi] ? 1 : 0);
    }
    fill_integrity(s, steps);
  }
  return plan;
}

CorruptedBatch apply_missingness(const data::Batch& batch, const MissingPlan& plan, const Vector& unknown_vector) {
  const Index n = batch.size();
  if (static_cast<Index>(plan.size()) != n) {
    throw ShapeError("plan covers " + std::to_string(plan.size()) + " samples, batch has " + std::to_string(n));
  }
  CorruptedBatch out;
  out.plan = plan;
  out.labels = batch.labels;
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    const Matrix& src = batch.features[mi];
    const Index t = plan.steps[mi];
    if (src.rows() != n * t) {
      throw ShapeError("modality " + std::string(short_name(m)) + " has " + std::to_string(src.rows()) +
                       " rows, plan expects " + std::to_string(n * t));
    }
    if (m == Modality::kLanguage && unknown_vector.size() != src.cols()) {
      throw ShapeError("unknown vector has width " + std::to_string(unknown_vector.size()) +
                       ", language features have " + std::to_string(src.cols()));
    }
    Matrix dst = src;
    for (Index i = 0; i < n; ++i) {
      const auto& kept = plan.samples[static_cast<std::size_t>(i)].kept[mi];
      for (Index s = 0; s < t; ++s) {
        if (kept[static_cast<std::size_t>(s)] != 0) continue;
        if (m == Modality::kLanguage) {
          dst.row(i * t + s) = unknown_vector.transpose();
        } else {
          dst.row(i * t + s).setZero();
        }
      }
    }
    out.features[mi] = std::move(dst);
  }
  return out;
}

std::string plan_to_json(const MissingPlan& plan) {
  nlohmann::json j;
  for (Modality m : kAllModalities) j["steps"][std::string(short_name(m))] = plan.steps[index_of(m)];
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : plan.samples) {
    nlohmann::json e;
    for (Modality m : kAllModalities) {
      const auto mi = index_of(m);
      const std::string key(short_name(m));
      e["dropped"][key] = s.dropped[mi];
      std::vector<bool> kept(s.kept[mi].begin(), s.kept[mi].end());
      e["kept"][key] = kept;
      e["integrity"][key] = s.integrity[mi];
    }
    samples.push_back(std::move(e));
  }
  j["samples"] = std::move(samples);
  return j.dump();
}

MissingPlan plan_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MissingPlan plan;
    for (Modality m : kAllModalities) plan.steps[index_of(m)] = j.at("steps").at(std::string(short_name(m))).get<Index>();
    for (const auto& e : j.at("samples")) {
      SamplePlan s;
      for (Modality m : kAllModalities) {
        const auto mi = index_of(m);
        const std::string key(short_name(m));
        s.dropped[mi] = e.at("dropped").at(key).get<bool>();
        for (bool b : e.at("kept").at(key).get<std::vector<bool>>()) s.kept[mi].push_back(b ? 1 : 0);
        s.integrity[mi] = e.at("integrity").at(key).get<Real>();
      }
      plan.samples.push_back(std::move(s));
    }
    plan.validate();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed plan JSON: ") + e.what());
  }
}

}  // namespace ifusion::missing
