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

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ifusion/nn.hpp"

namespace ifusion::optim {

/// Linear warm-up over the first `warmup_epochs` epochs (epoch e gets
/// base * (e + 1) / warmup), then cosine decay reaching 0 at `total_epochs`.
Real learning_rate(int epoch, Real base, int warmup_epochs, int total_epochs);

struct AdamWOptions {
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Real weight_decay = 1e-4;
};

/// Adam with decoupled weight decay. Only parameters that currently require
/// a gradient are touched; frozen tensors keep their bits.
class AdamW {
 public:
  AdamW(nn::ParameterStore& store, AdamWOptions options);

  void step(Real lr);

  /// Scales every present gradient so their joint L2 norm is at most
  /// `max_norm`; returns the norm before scaling.
  Real clip_grad_norm(Real max_norm);

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  struct Slot {
    Matrix m, v;
    std::int64_t steps = 0;
  };
  nn::ParameterStore* store_;
  AdamWOptions options_;
  std::vector<Slot> slots_;
};

}  // namespace ifusion::optim
