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


// Brute-force metric reference shared by the unit and acceptance tests.
// Written without the library's helpers: std::round already rounds half
// away from zero.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "ifusion/common.hpp"

namespace ifusion::testing {

struct OracleMetrics {
  Real mae = 0, acc7 = 0, acc5 = 0;
  std::optional<Real> acc2, f1;
};

inline OracleMetrics oracle_metrics(const Vector& p, const Vector& y, bool weighted_f1 = false) {
  OracleMetrics r;
  const auto n = p.size();
  Real tp = 0, fp = 0, fn = 0, tn = 0, nz = 0, hit2 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.mae += std::fabs(p[i] - y[i]) / static_cast<Real>(n);
    const auto bin = [](Real v, Real b) { return std::round(std::min(b, std::max(-b, v))); };
    r.acc7 += (bin(p[i], 3) == bin(y[i], 3)) ? 1.0 / static_cast<Real>(n) : 0.0;
    r.acc5 += (bin(p[i], 2) == bin(y[i], 2)) ? 1.0 / static_cast<Real>(n) : 0.0;
    if (y[i] != 0) {
      nz += 1;
      const bool a = p[i] > 0, b = y[i] > 0;
      hit2 += (a == b);
      tp += a && b;
      fp += a && !b;
      fn += !a && b;
      tn += !a && !b;
    }
  }
  if (nz > 0) {
    r.acc2 = hit2 / nz;
    const auto f1 = [](Real t, Real f_pos, Real f_neg) {
      if (t == 0) return 0.0;
      const Real prec = t / (t + f_pos), rec = t / (t + f_neg);
      return 2 * prec * rec / (prec + rec);
    };
    if (weighted_f1) {
      r.f1 = ((tp + fn) * f1(tp, fp, fn) + (tn + fp) * f1(tn, fn, fp)) / nz;
    } else {
      r.f1 = f1(tp, fp, fn);
    }
  }
  return r;
}

}  // namespace ifusion::testing
