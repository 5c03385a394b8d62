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

#include "ifusion/optim.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "ifusion/serialize.hpp"

namespace ifusion::optim {

Real learning_rate(int epoch, Real base, int warmup_epochs, int total_epochs) {
  if (epoch < warmup_epochs) {
    return base * static_cast<Real>(epoch + 1) / static_cast<Real>(warmup_epochs);
  }
  const int span = total_epochs - warmup_epochs;
  if (span <= 0) return base;
  const Real progress = static_cast<Real>(epoch - warmup_epochs) / static_cast<Real>(span);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(nn::ParameterStore& store, AdamWOptions options)
    : store_(&store), options_(options), slots_(store.parameters().size()) {}

void AdamW::step(Real lr) {
  auto& params = store_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ag::Tensor& t = params[i].tensor;
    if (!t.requires_grad() || !t.has_grad()) continue;
    Slot& s = slots_[i];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(t.rows(), t.cols());
      s.v = Matrix::Zero(t.rows(), t.cols());
    }
    ++s.steps;
    const Matrix& g = t.grad();
    Matrix& p = t.mutable_value();
    p *= (1.0 - lr * options_.weight_decay);
    s.m = options_.beta1 * s.m + (1.0 - options_.beta1) * g;
    s.v = options_.beta2 * s.v + (1.0 - options_.beta2) * g.cwiseAbs2();
    const Real bc1 = 1.0 - std::pow(options_.beta1, static_cast<Real>(s.steps));
    const Real bc2 = 1.0 - std::pow(options_.beta2, static_cast<Real>(s.steps));
    p.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + options_.eps);
  }
}

Real AdamW::clip_grad_norm(Real max_norm) {
  Real sq = 0.0;
  for (const auto& p : store_->parameters()) {
    if (p.tensor.requires_grad() && p.tensor.has_grad()) sq += p.tensor.grad().squaredNorm();
  }
  const Real norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Real factor = max_norm / (norm + 1e-12);
    for (auto& p : store_->parameters()) {
      if (p.tensor.requires_grad() && p.tensor.has_grad()) p.tensor.node()->grad *= factor;
    }
  }
  return norm;
}

void AdamW::save(std::ostream& out) const {
  io::write_pod<std::uint64_t>(out, slots_.size());
  for (const Slot& s : slots_) {
    io::write_pod<std::int64_t>(out, s.steps);
    io::write_matrix(out, s.m);
    io::write_matrix(out, s.v);
  }
}

void AdamW::load(std::istream& in) {
  const auto n = io::read_pod<std::uint64_t>(in);
  if (n != slots_.size()) throw LoadError("optimizer state has " + std::to_string(n) + " slots, expected " + std::to_string(slots_.size()));
  for (Slot& s : slots_) {
    s.steps = io::read_pod<std::int64_t>(in);
    s.m = io::read_matrix(in);
    s.v = io::read_matrix(in);
  }
}

}  // namespace ifusion::optim
