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

#include <cstring>

#include "ifusion/missingness.hpp"
#include "test_support.hpp"

namespace ifusion {
namespace {

using missing::MissingPlan;
using missing::MissingnessOptions;

const PerModality<Eigen::Index> kSteps = {5, 10, 20};

TEST(MaskedCount, SixtyPercentGivesPointFour) {
  for (Eigen::Index t : {5, 10, 20}) {
    const Eigen::Index k = missing::masked_count(0.6, t);
    EXPECT_EQ(k * 5, t * 3);
    EXPECT_EQ(static_cast<Real>(t - k) / static_cast<Real>(t), 0.4);
  }
  EXPECT_EQ(missing::masked_count(0.25, 10), 3);  // 2.5 rounds away from zero
  EXPECT_EQ(missing::masked_count(0.0, 7), 0);
  EXPECT_EQ(missing::masked_count(1.0, 7), 7);
}

TEST(SamplePlan, FixedRatioSixtyPercentAcrossLengths) {
  MissingnessOptions o;
  o.drop_rate = 0.0;
  o.fixed_intra_ratio = 0.6;
  const MissingPlan p = missing::sample_missing_plan(50, kSteps, o, 3);
  for (const auto& s : p.samples) {
    for (Modality m : kAllModalities) EXPECT_EQ(s.integrity[index_of(m)], 0.4);
  }
}

TEST(SamplePlan, NoCorruptionGivesFullIntegrity) {
  MissingnessOptions o;
  o.drop_rate = 0.0;
  o.fixed_intra_ratio = 0.0;
  const MissingPlan p = missing::sample_missing_plan(30, kSteps, o, 9);
  for (const auto& s : p.samples) {
    for (Modality m : kAllModalities) EXPECT_EQ(s.integrity[index_of(m)], 1.0);
  }
}

// Integrity is the correctly rounded kept / T, compared with no tolerance.
TEST(SamplePlan, PropertyOverManyPlans) {
  MissingnessOptions o;
  o.drop_rate = 0.5;
  const MissingPlan p = missing::sample_missing_plan(100000, kSteps, o, 1112);
  for (const auto& s : p.samples) {
    bool any = false;
    for (Modality m : kAllModalities) {
      const auto mi = index_of(m);
      long kept = 0;
      for (auto k : s.kept[mi]) kept += k;
      ASSERT_EQ(s.integrity[mi], static_cast<Real>(kept) / static_cast<Real>(kSteps[mi]));
      if (s.dropped[mi]) ASSERT_EQ(kept, 0);
      any = any || !s.dropped[mi];
    }
    ASSERT_TRUE(any);
  }
  EXPECT_NO_THROW(p.validate());
}

TEST(SamplePlan, InterDropFractionMonteCarlo) {
  MissingnessOptions o;
  o.drop_rate = 0.5;
  const MissingPlan p = missing::sample_missing_plan(1000, kSteps, o, 7);
  int dropped = 0;
  std::array<int, 6> subsets{};
  for (const auto& s : p.samples) {
    if (s.dropped[0] || s.dropped[1] || s.dropped[2]) {
      ++dropped;
      for (int k = 0; k < 6; ++k) {
        if (missing::drop_subset(k) == s.dropped) ++subsets[k];
      }
    }
  }
  EXPECT_NEAR(dropped / 1000.0, 0.5, 0.05);
  for (int c : subsets) EXPECT_GT(c, 40);  // each of the 6 subsets occurs
}

TEST(SamplePlan, DeterministicAndSeedSensitive) {
  MissingnessOptions o;
  const auto a = missing::sample_missing_plan(200, kSteps, o, 5);
  const auto b = missing::sample_missing_plan(200, kSteps, o, 5);
  const auto c = missing::sample_missing_plan(200, kSteps, o, 6);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(missing::plan_to_json(a), missing::plan_to_json(b));
}

TEST(SamplePlan, InvalidDropRate) {
  MissingnessOptions o;
  o.drop_rate = 1.5;
  EXPECT_THROW(missing::sample_missing_plan(3, kSteps, o, 1), ConfigError);
  o.drop_rate = -0.1;
  EXPECT_THROW(missing::sample_missing_plan(3, kSteps, o, 1), ConfigError);
}

TEST(ModePlan, RetainedSetsPerMode) {
  const auto p5 = missing::mode_plan(5, 2, kSteps);
  EXPECT_EQ(p5.samples[0].integrity[0], 1.0);
  EXPECT_EQ(p5.samples[0].integrity[1], 0.0);
  EXPECT_EQ(p5.samples[0].integrity[2], 0.0);
  const auto p0 = missing::mode_plan(0, 2, kSteps);
  EXPECT_EQ(p0.samples[1].integrity[0], 0.0);
  EXPECT_EQ(p0.samples[1].integrity[1], 1.0);
  EXPECT_EQ(p0.samples[1].integrity[2], 1.0);
  for (int mode = 0; mode < 6; ++mode) {
    const auto p = missing::mode_plan(mode, 1, kSteps);
    EXPECT_NO_THROW(p.validate());
    const auto r = missing::retained_modalities(mode);
    for (Modality m : kAllModalities) EXPECT_NE(r[index_of(m)], p.samples[0].dropped[index_of(m)]);
  }
  EXPECT_THROW(missing::mode_plan(6, 1, kSteps), ConfigError);
  EXPECT_THROW(missing::mode_plan(-1, 1, kSteps), ConfigError);
}

data::Batch random_batch(Eigen::Index n, std::uint64_t seed) {
  data::Batch b;
  const PerModality<Eigen::Index> dims = {4, 3, 2};
  for (Modality m : kAllModalities) {
    const auto mi = index_of(m);
    b.features[mi] = testing::random_matrix(n * kSteps[mi], dims[mi], seed + mi);
  }
  b.labels = testing::random_vector(n, seed + 9);
  for (Eigen::Index i = 0; i < n; ++i) b.indices.push_back(static_cast<std::size_t>(i));
  return b;
}

TEST(ApplyMissingness, AllKeptIsIdentity) {
  const auto b = random_batch(3, 1);
  MissingnessOptions o;
  o.drop_rate = 0.0;
  o.fixed_intra_ratio = 0.0;
  const auto plan = missing::sample_missing_plan(3, kSteps, o, 1);
  const auto c = missing::apply_missingness(b, plan, Vector::Constant(4, 7.0));
  for (int m = 0; m < 3; ++m) EXPECT_EQ(c.features[m], b.features[m]);
  EXPECT_EQ(c.labels, b.labels);
}

TEST(ApplyMissingness, DroppedAcousticIsZero) {
  const auto b = random_batch(2, 2);
  const auto plan = missing::mode_plan(1, 2, kSteps);  // keeps l and v
  const auto c = missing::apply_missingness(b, plan, Vector::Zero(4));
  EXPECT_TRUE((c.features[1].array() == 0.0).all());
  EXPECT_EQ(c.features[0], b.features[0]);
}

TEST(ApplyMissingness, LoopOracleBitwise) {
  const Eigen::Index n = 16;
  const auto b = random_batch(n, 3);
  const Vector unk = testing::random_vector(4, 77);
  const auto plan = missing::sample_missing_plan(n, kSteps, MissingnessOptions{}, 21);
  const auto c = missing::apply_missingness(b, plan, unk);
  for (int m = 0; m < 3; ++m) {
    const Eigen::Index t = kSteps[m];
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index s = 0; s < t; ++s) {
        const bool kept = plan.samples[i].kept[m][s] != 0;
        for (Eigen::Index f = 0; f < b.features[m].cols(); ++f) {
          const Real expect = kept ? b.features[m](i * t + s, f) : (m == 0 ? unk(f) : 0.0);
          ASSERT_EQ(std::memcmp(&expect, &c.features[m](i * t + s, f), sizeof(Real)), 0);
        }
      }
    }
  }
}

TEST(ApplyMissingness, DimensionMismatch) {
  const auto b = random_batch(3, 4);
  const auto plan = missing::mode_plan(0, 2, kSteps);
  EXPECT_THROW(missing::apply_missingness(b, plan, Vector::Zero(4)), ShapeError);
  const auto ok = missing::mode_plan(0, 3, kSteps);
  EXPECT_THROW(missing::apply_missingness(b, ok, Vector::Zero(5)), ShapeError);
}

TEST(PlanJson, RoundTripAndValidation) {
  const auto plan = missing::sample_missing_plan(40, kSteps, MissingnessOptions{}, 8);
  const auto back = missing::plan_from_json(missing::plan_to_json(plan));
  EXPECT_TRUE(plan == back);
  EXPECT_THROW(missing::plan_from_json("{"), Error);
  auto bad = plan;
  bad.samples[0].integrity[0] = 0.123;
  EXPECT_THROW(missing::plan_from_json(missing::plan_to_json(bad)), ConfigError);
  const std::vector<std::size_t> idx = {3, 1};
  const auto sub = plan.select(idx);
  EXPECT_TRUE(sub.samples[0] == plan.samples[3]);
}

}  // namespace
}  // namespace ifusion
