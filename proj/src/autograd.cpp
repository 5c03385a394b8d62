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

#include "ifusion/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>

#include "ifusion/random.hpp"

namespace ifusion::ag {

namespace {

thread_local bool t_grad_enabled = true;

using Index = Eigen::Index;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!t_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor attach(Matrix value, std::initializer_list<const Tensor*> inputs,
              std::function<void(const Matrix&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) node->parents.push_back(t->node());
  }
  node->backward = std::move(backward);
  return Tensor(std::move(node));
}

std::string dims(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a.value()) + " vs " +
                     dims(b.value()));
  }
}

Index per_sample_rows(const Tensor& x, Index batch, const char* op) {
  if (batch <= 0 || x.rows() % batch != 0) {
    throw ShapeError(std::string(op) + ": " + std::to_string(x.rows()) +
                     " rows not divisible into batch of " + std::to_string(batch));
  }
  return x.rows() / batch;
}

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::constant(Matrix value) { return leaf(std::move(value), false); }

Tensor Tensor::leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Real Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item: tensor is " + dims(value()));
  return value()(0, 0);
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("backward: root must be 1x1");
  if (!requires_grad()) return;

  // Post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.size() == 0) continue;
    n->backward(n->grad);
    n->grad.resize(0, 0);  // interior gradients are not kept
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  if (!tracking({&a, &b})) return Tensor::constant(std::move(out));
  auto na = a.node(), nb = b.node();
  return attach(std::move(out), {&a, &b}, [na, nb](const Matrix& g) {
    na->accumulate(g);
    nb->accumulate(g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  if (!tracking({&a, &b})) return Tensor::constant(std::move(out));
  auto na = a.node(), nb = b.node();
  return attach(std::move(out), {&a, &b}, [na, nb](const Matrix& g) {
    na->accumulate(g);
    nb->accumulate(-g);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  if (!tracking({&a, &b})) return Tensor::constant(std::move(out));
  auto na = a.node(), nb = b.node();
  return attach(std::move(out), {&a, &b}, [na, nb](const Matrix& g) {
    na->accumulate(g.cwiseProduct(nb->value));
    nb->accumulate(g.cwiseProduct(na->value));
  });
}

Tensor affine(const Tensor& a, Real mul, Real shift) {
  Matrix out = (a.value() * mul).array() + shift;
  if (!tracking({&a})) return Tensor::constant(std::move(out));
  auto na = a.node();
  return attach(std::move(out), {&a}, [na, mul](const Matrix& g) { na->accumulate(g * mul); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + dims(a.value()) + " x " + dims(b.value()));
  }
  Matrix out = a.value() * b.value();
  if (!tracking({&a, &b})) return Tensor::constant(std::move(out));
  auto na = a.node(), nb = b.node();
  return attach(std::move(out), {&a, &b}, [na, nb](const Matrix& g) {
    if (na->requires_grad) na->accumulate(g * nb->value.transpose());
    if (nb->requires_grad) nb->accumulate(na->value.transpose() * g);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows()) {
    throw ShapeError("linear: input " + dims(x.value()) + " vs weight " + dims(w.value()));
  }
  Matrix out = x.value() * w.value();
  if (b.defined()) {
    if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("linear: bias " + dims(b.value()));
    out.rowwise() += b.value().row(0);
  }
  if (!tracking({&x, &w, &b})) return Tensor::constant(std::move(out));
  auto nx = x.node(), nw = w.node();
  auto nb = b.defined() ? b.node() : nullptr;
  return attach(std::move(out), {&x, &w, &b}, [nx, nw, nb](const Matrix& g) {
    if (nx->requires_grad) nx->accumulate(g * nw->value.transpose());
    if (nw->requires_grad) nw->accumulate(nx->value.transpose() * g);
    if (nb && nb->requires_grad) nb->accumulate(g.colwise().sum());
  });
}

Tensor gelu(const Tensor& x) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Index i = 0; i < v.size(); ++i) {
    const Real z = v.data()[i];
    out.data()[i] = 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
  }
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx](const Matrix& g) {
    const Matrix& v = nx->value;
    Matrix dx(v.rows(), v.cols());
    const Real inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Index i = 0; i < v.size(); ++i) {
      const Real z = v.data()[i];
      const Real cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
      const Real pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
      dx.data()[i] = g.data()[i] * (cdf + z * pdf);
    }
    nx->accumulate(dx);
  });
}

Tensor softplus(const Tensor& x) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Index i = 0; i < v.size(); ++i) {
    const Real z = v.data()[i];
    out.data()[i] = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  }
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx](const Matrix& g) {
    const Matrix& v = nx->value;
    Matrix dx(v.rows(), v.cols());
    for (Index i = 0; i < v.size(); ++i) {
      const Real z = v.data()[i];
      const Real sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      dx.data()[i] = g.data()[i] * sig;
    }
    nx->accumulate(dx);
  });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx, lo, hi](const Matrix& g) {
    const Matrix& v = nx->value;
    Matrix dx = g;
    for (Index i = 0; i < v.size(); ++i) {
      if (v.data()[i] < lo || v.data()[i] > hi) dx.data()[i] = 0.0;
    }
    nx->accumulate(dx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  const Matrix& v = x.value();
  const Index d = v.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("layer_norm: affine parameters must be [1x" + std::to_string(d) + "]");
  }
  Matrix xhat(v.rows(), d);
  Vector inv_std(v.rows());
  for (Index r = 0; r < v.rows(); ++r) {
    const Real mu = v.row(r).mean();
    const Real var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  if (!tracking({&x, &gamma, &beta})) return Tensor::constant(std::move(out));
  auto nx = x.node(), ng = gamma.node(), nb = beta.node();
  return attach(std::move(out), {&x, &gamma, &beta},
                [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix& g) {
                  if (ng->requires_grad) ng->accumulate(g.cwiseProduct(xhat).colwise().sum());
                  if (nb->requires_grad) nb->accumulate(g.colwise().sum());
                  if (!nx->requires_grad) return;
                  Matrix dxhat = g.array().rowwise() * ng->value.row(0).array();
                  Matrix dx(g.rows(), g.cols());
                  for (Index r = 0; r < g.rows(); ++r) {
                    const Real m1 = dxhat.row(r).mean();
                    const Real m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<Real>(g.cols());
                    dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                  }
                  nx->accumulate(dx);
                });
}

Tensor dropout(const Tensor& x, Real rate, std::uint64_t key) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  const CounterRng rng(key, {});
  const Real keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng.at(static_cast<std::uint64_t>(i)) >> 11) * 0x1.0p-53;
    mask.data()[i] = u >= rate ? keep_scale : 0.0;
  }
  Matrix out = x.value().cwiseProduct(mask);
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x},
                [nx, mask = std::move(mask)](const Matrix& g) { nx->accumulate(g.cwiseProduct(mask)); });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Index batch, int heads,
                 std::vector<Matrix>* weights) {
  const Index tq = per_sample_rows(q, batch, "attention(q)");
  const Index tk = per_sample_rows(k, batch, "attention(k)");
  require_same_shape(k, v, "attention(k,v)");
  const Index width = q.cols();
  if (k.cols() != width) throw ShapeError("attention: q/k width mismatch");
  if (heads <= 0 || width % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const Index dk = width / heads;
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(dk));

  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out(qv.rows(), width);
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(static_cast<std::size_t>(batch * heads));
  for (Index n = 0; n < batch; ++n) {
    for (int h = 0; h < heads; ++h) {
      const auto qb = qv.block(n * tq, h * dk, tq, dk);
      const auto kb = kv.block(n * tk, h * dk, tk, dk);
      const auto vb = vv.block(n * tk, h * dk, tk, dk);
      Matrix s = (qb * kb.transpose()) * scale;
      for (Index r = 0; r < tq; ++r) {
        const Real mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(n * tq, h * dk, tq, dk) = s * vb;
      probs->push_back(std::move(s));
    }
  }
  if (weights != nullptr) *weights = *probs;
  if (!tracking({&q, &k, &v})) return Tensor::constant(std::move(out));

  auto nq = q.node(), nk = k.node(), nv = v.node();
  return attach(std::move(out), {&q, &k, &v},
                [nq, nk, nv, probs, batch, heads, tq, tk, dk, scale](const Matrix& g) {
                  Matrix dq = Matrix::Zero(nq->value.rows(), nq->value.cols());
                  Matrix dkm = Matrix::Zero(nk->value.rows(), nk->value.cols());
                  Matrix dv = Matrix::Zero(nv->value.rows(), nv->value.cols());
                  for (Index n = 0; n < batch; ++n) {
                    for (int h = 0; h < heads; ++h) {
                      const Matrix& p = (*probs)[static_cast<std::size_t>(n * heads + h)];
                      const auto go = g.block(n * tq, h * dk, tq, dk);
                      const auto qb = nq->value.block(n * tq, h * dk, tq, dk);
                      const auto kb = nk->value.block(n * tk, h * dk, tk, dk);
                      const auto vb = nv->value.block(n * tk, h * dk, tk, dk);
                      dv.block(n * tk, h * dk, tk, dk) += p.transpose() * go;
                      Matrix dp = go * vb.transpose();
                      Matrix ds(tq, tk);
                      for (Index r = 0; r < tq; ++r) {
                        const Real inner = dp.row(r).dot(p.row(r));
                        ds.row(r) = p.row(r).array() * (dp.row(r).array() - inner);
                      }
                      ds *= scale;
                      dq.block(n * tq, h * dk, tq, dk) += ds * kb;
                      dkm.block(n * tk, h * dk, tk, dk) += ds.transpose() * qb;
                    }
                  }
                  nq->accumulate(dq);
                  nk->accumulate(dkm);
                  nv->accumulate(dv);
                });
}

Tensor prepend_rows(const Tensor& x, const Tensor& token, Index batch) {
  const Index t = per_sample_rows(x, batch, "prepend_rows");
  if (token.cols() != x.cols()) throw ShapeError("prepend_rows: token width mismatch");
  const Index r = token.rows();
  Matrix out(batch * (t + r), x.cols());
  for (Index n = 0; n < batch; ++n) {
    out.middleRows(n * (t + r), r) = token.value();
    out.middleRows(n * (t + r) + r, t) = x.value().middleRows(n * t, t);
  }
  if (!tracking({&x, &token})) return Tensor::constant(std::move(out));
  auto nx = x.node(), nt = token.node();
  return attach(std::move(out), {&x, &token}, [nx, nt, batch, t, r](const Matrix& g) {
    if (nx->requires_grad) {
      Matrix dx(batch * t, g.cols());
      for (Index n = 0; n < batch; ++n) dx.middleRows(n * t, t) = g.middleRows(n * (t + r) + r, t);
      nx->accumulate(dx);
    }
    if (nt->requires_grad) {
      Matrix dt = Matrix::Zero(r, g.cols());
      for (Index n = 0; n < batch; ++n) dt += g.middleRows(n * (t + r), r);
      nt->accumulate(dt);
    }
  });
}

Tensor slice_time(const Tensor& x, Index batch, Index start, Index len) {
  const Index t = per_sample_rows(x, batch, "slice_time");
  if (start < 0 || len < 0 || start + len > t) throw ShapeError("slice_time: range out of bounds");
  Matrix out(batch * len, x.cols());
  for (Index n = 0; n < batch; ++n) out.middleRows(n * len, len) = x.value().middleRows(n * t + start, len);
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx, batch, t, start, len](const Matrix& g) {
    Matrix dx = Matrix::Zero(batch * t, g.cols());
    for (Index n = 0; n < batch; ++n) dx.middleRows(n * t + start, len) = g.middleRows(n * len, len);
    nx->accumulate(dx);
  });
}

Tensor time_mix(const Tensor& x, const Tensor& w, Index batch) {
  const Index tin = per_sample_rows(x, batch, "time_mix");
  if (w.cols() != tin) {
    throw ShapeError("time_mix: weight " + dims(w.value()) + " vs sequence length " +
                     std::to_string(tin));
  }
  const Index tout = w.rows();
  Matrix out(batch * tout, x.cols());
  for (Index n = 0; n < batch; ++n) {
    out.middleRows(n * tout, tout).noalias() = w.value() * x.value().middleRows(n * tin, tin);
  }
  if (!tracking({&x, &w})) return Tensor::constant(std::move(out));
  auto nx = x.node(), nw = w.node();
  return attach(std::move(out), {&x, &w}, [nx, nw, batch, tin, tout](const Matrix& g) {
    if (nx->requires_grad) {
      Matrix dx(batch * tin, g.cols());
      for (Index n = 0; n < batch; ++n) {
        dx.middleRows(n * tin, tin).noalias() = nw->value.transpose() * g.middleRows(n * tout, tout);
      }
      nx->accumulate(dx);
    }
    if (nw->requires_grad) {
      Matrix dw = Matrix::Zero(tout, tin);
      for (Index n = 0; n < batch; ++n) {
        dw.noalias() += g.middleRows(n * tout, tout) * nx->value.middleRows(n * tin, tin).transpose();
      }
      nw->accumulate(dw);
    }
  });
}

Tensor tile_rows(const Tensor& x, Index batch) {
  const Index t = x.rows();
  Matrix out(batch * t, x.cols());
  for (Index n = 0; n < batch; ++n) out.middleRows(n * t, t) = x.value();
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx, batch, t](const Matrix& g) {
    Matrix dx = Matrix::Zero(t, g.cols());
    for (Index n = 0; n < batch; ++n) dx += g.middleRows(n * t, t);
    nx->accumulate(dx);
  });
}

Tensor mean_time(const Tensor& x, Index batch) {
  const Index t = per_sample_rows(x, batch, "mean_time");
  Matrix out(batch, x.cols());
  for (Index n = 0; n < batch; ++n) out.row(n) = x.value().middleRows(n * t, t).colwise().mean();
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx, batch, t](const Matrix& g) {
    Matrix dx(batch * t, g.cols());
    const Real inv = 1.0 / static_cast<Real>(t);
    for (Index n = 0; n < batch; ++n) dx.middleRows(n * t, t).rowwise() = g.row(n) * inv;
    nx->accumulate(dx);
  });
}

Tensor scale_samples(const Tensor& x, const Tensor& w, Index batch) {
  const Index t = per_sample_rows(x, batch, "scale_samples");
  if (w.rows() != batch || w.cols() != 1) throw ShapeError("scale_samples: weights must be [N x 1]");
  Matrix out(x.rows(), x.cols());
  for (Index n = 0; n < batch; ++n) out.middleRows(n * t, t) = x.value().middleRows(n * t, t) * w.value()(n, 0);
  if (!tracking({&x, &w})) return Tensor::constant(std::move(out));
  auto nx = x.node(), nw = w.node();
  return attach(std::move(out), {&x, &w}, [nx, nw, batch, t](const Matrix& g) {
    if (nx->requires_grad) {
      Matrix dx(g.rows(), g.cols());
      for (Index n = 0; n < batch; ++n) dx.middleRows(n * t, t) = g.middleRows(n * t, t) * nw->value(n, 0);
      nx->accumulate(dx);
    }
    if (nw->requires_grad) {
      Matrix dw(batch, 1);
      for (Index n = 0; n < batch; ++n) {
        dw(n, 0) = g.middleRows(n * t, t).cwiseProduct(nx->value.middleRows(n * t, t)).sum();
      }
      nw->accumulate(dw);
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  if (!tracking({&a, &b})) return Tensor::constant(std::move(out));
  auto na = a.node(), nb = b.node();
  const Index ca = a.cols(), cb = b.cols();
  return attach(std::move(out), {&a, &b}, [na, nb, ca, cb](const Matrix& g) {
    na->accumulate(g.leftCols(ca));
    nb->accumulate(g.rightCols(cb));
  });
}

Tensor gather_rows(const Tensor& x, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  std::vector<Index> idx(rows.begin(), rows.end());
  return attach(std::move(out), {&x}, [nx, idx = std::move(idx)](const Matrix& g) {
    Matrix dx = Matrix::Zero(nx->value.rows(), nx->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += g.row(static_cast<Index>(i));
    nx->accumulate(dx);
  });
}

Tensor column(const Tensor& x, Index col) {
  if (col < 0 || col >= x.cols()) throw ShapeError("column: index out of range");
  Matrix out = x.value().col(col);
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx, col](const Matrix& g) {
    Matrix dx = Matrix::Zero(nx->value.rows(), nx->value.cols());
    dx.col(col) = g.col(0);
    nx->accumulate(dx);
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x}, [nx](const Matrix& g) {
    nx->accumulate(Matrix::Constant(nx->value.rows(), nx->value.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  return affine(sum(x), 1.0 / static_cast<Real>(x.value().size()));
}

Tensor sum_squares(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  if (!tracking({&x})) return Tensor::constant(std::move(out));
  auto nx = x.node();
  return attach(std::move(out), {&x},
                [nx](const Matrix& g) { nx->accumulate(nx->value * (2.0 * g(0, 0))); });
}

Tensor cross_covariance_penalty(const Tensor& shared, const Tensor& priv, Index batch, Real eps) {
  require_same_shape(shared, priv, "cross_covariance_penalty");
  const Index t = per_sample_rows(shared, batch, "cross_covariance_penalty");
  const Index d = shared.cols();
  const Real scale = 1.0 / (static_cast<Real>(d) * static_cast<Real>(d) * static_cast<Real>(batch));

  struct SampleCache {
    Matrix sc, pc, sn, pn, c;
    Vector rs, rp;
  };
  auto caches = std::make_shared<std::vector<SampleCache>>(static_cast<std::size_t>(batch));
  auto normalize = [eps](const Matrix& centered, Matrix& normed, Vector& norms) {
    norms = centered.colwise().norm().transpose();
    normed = centered;
    for (Index j = 0; j < centered.cols(); ++j) normed.col(j) /= (norms(j) + eps);
  };

  Real total = 0.0;
  for (Index n = 0; n < batch; ++n) {
    SampleCache& c = (*caches)[static_cast<std::size_t>(n)];
    const auto s = shared.value().middleRows(n * t, t);
    const auto p = priv.value().middleRows(n * t, t);
    c.sc = s.rowwise() - s.colwise().mean();
    c.pc = p.rowwise() - p.colwise().mean();
    normalize(c.sc, c.sn, c.rs);
    normalize(c.pc, c.pn, c.rp);
    c.c = c.sn.transpose() * c.pn;
    total += c.c.squaredNorm();
  }
  Matrix out(1, 1);
  out(0, 0) = total * scale;
  if (!tracking({&shared, &priv})) return Tensor::constant(std::move(out));

  auto ns = shared.node(), np = priv.node();
  return attach(std::move(out), {&shared, &priv}, [ns, np, caches, batch, t, scale, eps](const Matrix& g) {
    // Backward through column normalization then centering.
    auto unnormalize = [eps](const Matrix& dnormed, const Matrix& centered, const Vector& norms) {
      Matrix dc(centered.rows(), centered.cols());
      for (Index j = 0; j < centered.cols(); ++j) {
        const Real r = norms(j);
        dc.col(j) = dnormed.col(j) / (r + eps);
        if (r > 0.0) {
          const Real proj = centered.col(j).dot(dnormed.col(j));
          dc.col(j) -= centered.col(j) * (proj / (r * (r + eps) * (r + eps)));
        }
      }
      Matrix dx = dc.rowwise() - dc.colwise().mean();
      return dx;
    };
    Matrix ds(batch * t, ns->value.cols());
    Matrix dp(batch * t, np->value.cols());
    for (Index n = 0; n < batch; ++n) {
      const SampleCache& c = (*caches)[static_cast<std::size_t>(n)];
      const Matrix gc = c.c * (2.0 * scale * g(0, 0));
      ds.middleRows(n * t, t) = unnormalize(c.pn * gc.transpose(), c.sc, c.rs);
      dp.middleRows(n * t, t) = unnormalize(c.sn * gc, c.pc, c.rp);
    }
    ns->accumulate(ds);
    np->accumulate(dp);
  });
}

}  // namespace ifusion::ag
