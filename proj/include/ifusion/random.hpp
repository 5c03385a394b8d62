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

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string_view>

namespace ifusion {

/// Counter-based pseudo-random source.
///
/// A stream is identified by a seed plus an arbitrary list of 64-bit words
/// (sample index, modality, purpose tag, ...). The key is derived by folding
/// the words through the SplitMix64 finalizer:
///
///   key_0     = mix64(seed + G)
///   key_{i+1} = mix64(key_i ^ (word_i + G))
///
/// and the n-th draw of the stream (n = 0, 1, ...) is
///
///   x_n = mix64(key + (n + 1) * G)
///
/// with G = 0x9E3779B97F4A7C15. Uniforms use the top 53 bits:
/// u = (x >> 11) * 2^-53 in [0, 1). All of this is integer arithmetic, so the
/// sequence is bit-identical on every platform; only normal() touches libm.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t derive_key(std::uint64_t seed,
                                            std::initializer_list<std::uint64_t> words) {
    std::uint64_t key = mix64(seed + kGolden);
    for (std::uint64_t w : words) key = mix64(key ^ (w + kGolden));
    return key;
  }

  /// FNV-1a of a tag string, for readable stream names.
  static constexpr std::uint64_t tag(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  constexpr CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> words)
      : key_(derive_key(seed, words)) {}

  /// Value at an absolute counter position; does not advance the stream.
  constexpr std::uint64_t at(std::uint64_t n) const { return mix64(key_ + (n + 1) * kGolden); }

  constexpr std::uint64_t next_u64() { return at(counter_++); }

  constexpr double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// floor(uniform() * n), n >= 1.
  constexpr std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  /// Box-Muller, cosine branch only: two uniforms per normal.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ifusion
