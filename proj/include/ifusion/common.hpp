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

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ifusion {

using Real = double;

/// Row-major dynamic matrices. Batched sequences are stored as stacked
/// per-sample blocks: a batch of N sequences of length T and width d is an
/// [N*T x d] matrix whose rows [n*T, (n+1)*T) belong to sample n.
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

enum class Modality : int { kLanguage = 0, kAcoustic = 1, kVisual = 2 };

inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::kLanguage, Modality::kAcoustic, Modality::kVisual};

template <typename T>
using PerModality = std::array<T, kNumModalities>;

constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

constexpr std::string_view short_name(Modality m) {
  switch (m) {
    case Modality::kLanguage: return "l";
    case Modality::kAcoustic: return "a";
    case Modality::kVisual: return "v";
  }
  return "?";
}

constexpr std::string_view long_name(Modality m) {
  switch (m) {
    case Modality::kLanguage: return "language";
    case Modality::kAcoustic: return "acoustic";
    case Modality::kVisual: return "visual";
  }
  return "?";
}

/// The two modalities other than `m`, in l < a < v order.
constexpr std::array<Modality, 2> others_of(Modality m) {
  switch (m) {
    case Modality::kLanguage: return {Modality::kAcoustic, Modality::kVisual};
    case Modality::kAcoustic: return {Modality::kLanguage, Modality::kVisual};
    case Modality::kVisual: return {Modality::kLanguage, Modality::kAcoustic};
  }
  return {Modality::kAcoustic, Modality::kVisual};
}

// Error hierarchy. Every error carries a short machine-readable kind so the
// CLI can report it as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

class LoadError : public Error {
 public:
  explicit LoadError(const std::string& what) : Error("load_error", what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

/// Rounds half away from zero (std::round semantics, spelled out for intent).
inline long round_half_away(double x) { return static_cast<long>(std::round(x)); }

}  // namespace ifusion
