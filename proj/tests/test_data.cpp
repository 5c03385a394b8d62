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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "json.hpp"

#include "ifusion/data.hpp"
#include "test_support.hpp"

namespace ifusion {
namespace {

namespace fs = std::filesystem;
using data::Dataset;
using data::Split;
using data::SyntheticSpec;

// Straight-line re-derivation of the generator's random source, written
// from the stream definition rather than calling CounterRng.
struct OracleStream {
  std::uint64_t key;
  std::uint64_t n = 0;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t fnv(const char* s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (; *s; ++s) {
      h ^= static_cast<unsigned char>(*s);
      h *= 0x100000001B3ULL;
    }
    return h;
  }
  OracleStream(std::uint64_t seed, std::vector<std::uint64_t> words) {
    const std::uint64_t g = 0x9E3779B97F4A7C15ULL;
    key = mix(seed + g);
    for (auto w : words) key = mix(key ^ (w + g));
  }
  double uniform() {
    const std::uint64_t g = 0x9E3779B97F4A7C15ULL;
    ++n;
    return static_cast<double>(mix(key + n * g) >> 11) / 9007199254740992.0;
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

TEST(Synthetic, RegenerationOracleMeanLabel) {
  SyntheticSpec spec;
  spec.seed = 1112;
  spec.latent_dim = 4;
  spec.n_train = 32;
  const Dataset d = data::generate_synthetic_split(spec, Split::kTrain);

  const Real mag = 1.5 / std::sqrt(4.0);
  const Real w[4] = {mag, -mag, mag, -mag};
  Real total = 0.0;
  for (std::uint64_t i = 0; i < 32; ++i) {
    OracleStream s(1112, {OracleStream::fnv("sample"), 0, i});
    Real y = 0.0;
    for (int j = 0; j < 4; ++j) y += w[j] * s.normal();
    total += std::min(3.0, std::max(-3.0, y));
  }
  EXPECT_EQ(d.mean_label(), total / 32.0);  // bitwise
}

TEST(Synthetic, RegenerationOracleFeatures) {
  SyntheticSpec spec;
  spec.n_valid = 3;
  const Dataset d = data::generate_synthetic_split(spec, Split::kValid);
  const auto a = spec.resolved_shared_maps();
  const auto b = spec.resolved_private_maps();
  const std::uint64_t i = 2;
  OracleStream s(spec.seed, {OracleStream::fnv("sample"), 1, i});
  std::vector<Real> z(16);
  for (auto& v : z) v = s.normal();
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    const auto& dims = spec.dims[mi];
    std::vector<std::vector<Real>> eps(dims.steps, std::vector<Real>(dims.features));
    for (auto& row : eps)
      for (auto& v : row) v = s.normal();
    for (Eigen::Index t = 0; t < dims.steps; ++t) {
      for (Eigen::Index f = 0; f < dims.features; ++f) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - 1), hi = std::min<Eigen::Index>(dims.steps - 1, t + 1);
        Real e = 0.0;
        for (Eigen::Index u = lo; u <= hi; ++u) e += eps[u][f];
        // colwise().mean() sums then divides.
        e /= static_cast<Real>(hi - lo + 1);
        Real base = 0.0;
        for (int j = 0; j < 4; ++j) base += a[mi](f, j) * z[j];
        Real priv = 0.0;
        for (int j = 0; j < 4; ++j) priv += b[mi](f, j) * z[4 + 4 * mi + j];
        const float expect = static_cast<float>(base + priv + spec.noise_scale * e);
        EXPECT_NEAR(d[i].features[mi](t, f), expect, 1e-5f) << short_name(m) << " t=" << t << " f=" << f;
      }
    }
  }
}

TEST(Synthetic, NoiselessSharedOnlyIsAffineImage) {
  SyntheticSpec spec;
  spec.noise_scale = 0.0;
  spec.n_train = 20;
  PerModality<Matrix> zero;
  for (Modality m : kAllModalities) zero[index_of(m)] = Matrix::Zero(spec.dims[index_of(m)].features, spec.latent_dim);
  spec.private_maps = zero;
  const Dataset d = data::generate_synthetic_split(spec, Split::kTrain);
  const auto maps = spec.resolved_shared_maps();
  // Recover z_s from the visual stream by least squares, then predict the
  // language stream from it: exact up to float rounding.
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector v = d[i].features[2].row(0).cast<Real>().transpose();
    const Vector z = maps[2].colPivHouseholderQr().solve(v);
    const Vector l_pred = maps[0] * z;
    const Vector l = d[i].features[0].row(3).cast<Real>().transpose();
    EXPECT_LT((l - l_pred).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Synthetic, ZeroWeightsGiveZeroLabels) {
  SyntheticSpec spec;
  spec.label_weights = std::vector<Real>(4, 0.0);
  spec.n_train = 16;
  const Dataset d = data::generate_synthetic_split(spec, Split::kTrain);
  for (const auto& s : d.samples()) EXPECT_EQ(s.label, 0.0);
}

TEST(Synthetic, DeterministicAndInvariantsHold) {
  SyntheticSpec spec;
  spec.n_train = 64;
  const Dataset a = data::generate_synthetic_split(spec, Split::kTrain);
  const Dataset b = data::generate_synthetic_split(spec, Split::kTrain);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    for (Modality m : kAllModalities) EXPECT_EQ(a[i].features[index_of(m)], b[i].features[index_of(m)]);
    EXPECT_GE(a[i].label, -3.0);
    EXPECT_LE(a[i].label, 3.0);
    ids.insert(a[i].id);
  }
  EXPECT_EQ(ids.size(), a.size());
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec spec;
  spec.latent_dim = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.noise_scale = -1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.dims[1].features = 0;
  EXPECT_THROW(data::generate_synthetic_split(spec, Split::kTrain), ConfigError);
}

Dataset hand_dataset(std::size_t n, PerModality<data::ModalityDims> dims, std::uint64_t seed) {
  std::vector<data::UtteranceSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    data::UtteranceSample s;
    for (Modality m : kAllModalities) {
      const auto& d = dims[index_of(m)];
      s.features[index_of(m)] = testing::random_matrix(d.steps, d.features, seed + 10 * i + index_of(m)).cast<float>();
    }
    s.label = std::tanh(static_cast<Real>(i)) * 2.0;
    s.id = "utt" + std::to_string(i);
    samples.push_back(std::move(s));
  }
  return Dataset(Split::kTest, dims, std::move(samples));
}

TEST(Archive, HandWrittenArchiveLoads) {
  const auto dir = testing::scratch_dir("archive_hand");
  const PerModality<data::ModalityDims> dims = {data::ModalityDims{8, 768}, data::ModalityDims{8, 5},
                                                data::ModalityDims{8, 20}};
  data::write_feature_archive(hand_dataset(2, dims, 1), dir);
  const Dataset d = data::load_feature_archive(dir);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dims()[0].features, 768);
  EXPECT_EQ(d.dims()[1].features, 5);
  EXPECT_EQ(d.dims()[2].features, 20);
}

TEST(Archive, RoundTripIsBitwise) {
  const auto dir = testing::scratch_dir("archive_roundtrip");
  const PerModality<data::ModalityDims> dims = {data::ModalityDims{5, 7}, data::ModalityDims{3, 4},
                                                data::ModalityDims{6, 2}};
  const Dataset a = hand_dataset(9, dims, 5);
  data::write_feature_archive(a, dir);
  const Dataset b = data::load_feature_archive(dir);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(b.split(), Split::kTest);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].label, b[i].label);
    for (Modality m : kAllModalities) {
      const auto& x = a[i].features[index_of(m)];
      const auto& y = b[i].features[index_of(m)];
      ASSERT_EQ(x.size(), y.size());
      EXPECT_EQ(std::memcmp(x.data(), y.data(), sizeof(float) * x.size()), 0);
    }
  }
}

TEST(Archive, DeclaredDimMismatchIsLoadError) {
  const auto dir = testing::scratch_dir("archive_mismatch");
  const PerModality<data::ModalityDims> dims = {data::ModalityDims{8, 4}, data::ModalityDims{8, 6},
                                                data::ModalityDims{8, 3}};
  data::write_feature_archive(hand_dataset(2, dims, 3), dir);
  // Manifest claims d_a = 5 while the binary holds 6 features per step.
  nlohmann::json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    in >> manifest;
  }
  manifest["modalities"]["a"]["features"] = 5;
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump();
  }
  try {
    data::load_feature_archive(dir);
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("a.bin"), std::string::npos) << e.what();
  }
}

TEST(Archive, MissingManifestAndNonFinite) {
  const auto dir = testing::scratch_dir("archive_bad");
  EXPECT_THROW(data::load_feature_archive(dir), LoadError);
  const PerModality<data::ModalityDims> dims = {data::ModalityDims{2, 2}, data::ModalityDims{2, 2},
                                                data::ModalityDims{2, 2}};
  data::write_feature_archive(hand_dataset(2, dims, 4), dir);
  {
    std::fstream f(dir / "v.bin", std::ios::in | std::ios::out | std::ios::binary);
    const float nan = std::nanf("");
    f.seekp(4 * sizeof(float));
    f.write(reinterpret_cast<const char*>(&nan), sizeof(float));
  }
  try {
    data::load_feature_archive(dir);
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("utt1"), std::string::npos) << e.what();
  }
}

TEST(Batches, ShuffleIsSeededPermutation) {
  SyntheticSpec spec;
  spec.n_train = 150;
  const Dataset d = data::generate_synthetic_split(spec, Split::kTrain);
  const data::BatchIterator it(d, 64, 5, true);
  const auto p0 = it.permutation(0), p0b = it.permutation(0), p1 = it.permutation(1);
  EXPECT_EQ(p0, p0b);
  EXPECT_NE(p0, p1);
  std::vector<std::size_t> sorted = p0;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);

  const auto groups = it.epoch_indices(0);
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0].size(), 64u);
  EXPECT_EQ(groups[2].size(), 22u);

  const data::BatchIterator ordered(d, 64, 5, false);
  EXPECT_EQ(ordered.permutation(3)[10], 10u);
}

TEST(Batches, AssembleStacksSamples) {
  SyntheticSpec spec;
  spec.n_train = 4;
  const Dataset d = data::generate_synthetic_split(spec, Split::kTrain);
  const std::vector<std::size_t> idx = {2, 0};
  const data::Batch b = data::assemble_batch(d, idx);
  EXPECT_EQ(b.size(), 2);
  EXPECT_EQ(b.labels(0), d[2].label);
  const auto& l = b.features[0];
  EXPECT_EQ(l.rows(), 16);
  EXPECT_EQ(l(8, 3), static_cast<Real>(d[0].features[0](0, 3)));
}

TEST(DatasetInvariants, RejectBadSamples) {
  const PerModality<data::ModalityDims> dims = {data::ModalityDims{2, 2}, data::ModalityDims{2, 2},
                                                data::ModalityDims{2, 2}};
  auto samples = hand_dataset(2, dims, 8).samples();
  auto dup = samples;
  dup[1].id = dup[0].id;
  EXPECT_THROW(Dataset(Split::kTrain, dims, dup), Error);
  auto bad_label = samples;
  bad_label[0].label = 3.5;
  EXPECT_THROW(Dataset(Split::kTrain, dims, bad_label), Error);
  EXPECT_THROW(Dataset(Split::kTrain, dims, {}), Error);
}

}  // namespace
}  // namespace ifusion
