// Copyright 2026 The hybrid-avsr Authors
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

#include "avsr/tape.hpp"

#include <cmath>
#include <memory>

#include "avsr/ctc.hpp"
#include "avsr/error.hpp"

namespace avsr::ad {

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Matrix& storage) {
  if (auto it = params_.find(&storage); it != params_.end()) return {this, it->second};
  Node n;
  n.external = &storage;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  params_.emplace(&storage, id);
  return {this, id};
}

Var Tape::external(const Matrix& storage) {
  Node n;
  n.external = &storage;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Var Tape::push(Matrix value, std::vector<int> parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (int p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var out) {
  const Matrix& v = value(out.id);
  if (v.rows() != 1 || v.cols() != 1) throw UsageError("backward: target must be 1x1");
  for (Node& n : nodes_) n.grad = Matrix();
  if (!nodes_[out.id].needs_grad) return;
  grad_buffer(out.id)(0, 0) = 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.grad.empty()) return n.grad;
  const Matrix& val = value(v.id);
  return Matrix(val.rows(), val.cols());
}

void Tape::for_each_param_grad(
    const std::function<void(const Matrix&, const Matrix&)>& fn) const {
  for (const auto& [storage, id] : params_) {
    const Node& n = nodes_[id];
    if (!n.grad.empty()) fn(*storage, n.grad);
  }
}

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw UsageError(std::string("shape mismatch in ") + what);
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  check(av.cols() == bv.rows(), "matmul");
  return t.push(avsr::matmul(av, bv), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(a.id)) gemm_nt_acc(g, t.value(b.id), t.grad_buffer(a.id));
    if (t.needs_grad(b.id)) gemm_tn_acc(t.value(a.id), g, t.grad_buffer(b.id));
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  check(a.value().same_shape(b.value()), "add");
  Matrix out = a.value();
  out += b.value();
  return t.push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(a.id)) t.grad_buffer(a.id) += g;
    if (t.needs_grad(b.id)) t.grad_buffer(b.id) += g;
  });
}

Var add_row(Var a, Var r) {
  Tape& t = *a.tape;
  const Matrix& rv = r.value();
  check(rv.rows() == 1 && rv.cols() == a.cols(), "add_row");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += rv(0, j);
  }
  return t.push(std::move(out), {a.id, r.id}, [a, r](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(a.id)) t.grad_buffer(a.id) += g;
    if (t.needs_grad(r.id)) {
      Matrix& gr = t.grad_buffer(r.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  check(a.value().same_shape(b.value()), "mul");
  Matrix out = a.value();
  {
    auto o = out.values();
    auto bv = b.value().values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  }
  return t.push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    auto g = t.grad_of(self).values();
    if (t.needs_grad(a.id)) {
      auto ga = t.grad_buffer(a.id).values();
      auto bv = t.value(b.id).values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b.id)) {
      auto gb = t.grad_buffer(b.id).values();
      auto av = t.value(a.id).values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  out *= s;
  return t.push(std::move(out), {a.id}, [a, s](Tape& t, int self) {
    auto g = t.grad_of(self).values();
    auto ga = t.grad_buffer(a.id).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (double& v : out.values()) v = sigmoid_scalar(v);
  return t.push(std::move(out), {a.id}, [a](Tape& t, int self) {
    auto g = t.grad_of(self).values();
    auto y = t.value(self).values();
    auto ga = t.grad_buffer(a.id).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return t.push(std::move(out), {a.id}, [a](Tape& t, int self) {
    auto g = t.grad_of(self).values();
    auto y = t.value(self).values();
    auto ga = t.grad_buffer(a.id).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  check(av.rows() == bv.rows(), "concat_cols");
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(av.row(i).begin(), av.row(i).end(), dst.begin());
    std::copy(bv.row(i).begin(), bv.row(i).end(), dst.begin() + av.cols());
  }
  const std::size_t split = av.cols();
  return t.push(std::move(out), {a.id, b.id}, [a, b, split](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(a.id)) {
      Matrix& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < split; ++j) ga(i, j) += g(i, j);
    }
    if (t.needs_grad(b.id)) {
      Matrix& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = split; j < g.cols(); ++j) gb(i, j - split) += g(i, j);
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  check(begin + count <= av.cols(), "slice_cols");
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  return t.push(std::move(out), {a.id}, [a, begin, count](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) ga(i, begin + j) += g(i, j);
  });
}

Var row(Var a, std::size_t r) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  check(r < av.rows(), "row");
  Matrix out = Matrix::row_vector(av.row(r));
  return t.push(std::move(out), {a.id}, [a, r](Tape& t, int self) {
    auto g = t.grad_of(self).row(0);
    auto ga = t.grad_buffer(a.id).row(r);
    for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw UsageError("stack_rows: no rows");
  Tape& t = *rows.front().tape;
  const std::size_t cols = rows.front().cols();
  Matrix out(rows.size(), cols);
  std::vector<int> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Matrix& v = rows[i].value();
    check(v.rows() == 1 && v.cols() == cols, "stack_rows");
    std::copy(v.row(0).begin(), v.row(0).end(), out.row(i).begin());
    ids.push_back(rows[i].id);
  }
  return t.push(std::move(out), ids, [ids](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      auto gi = t.grad_buffer(ids[i]).row(0);
      auto src = g.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) gi[j] += src[j];
    }
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.push(avsr::transpose(a.value()), {a.id}, [a](Tape& t, int self) {
    t.grad_buffer(a.id) += avsr::transpose(t.grad_of(self));
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix out = avsr::log_softmax_rows(a.value());
  for (double& v : out.values()) v = std::exp(v);
  return t.push(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  return t.push(avsr::log_softmax_rows(a.value()), {a.id}, [a](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) total += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) - std::exp(y(i, j)) * total;
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return t.push(Matrix(1, 1, total), {a.id}, [a](Tape& t, int self) {
    const double g = t.grad_of(self)(0, 0);
    for (double& v : t.grad_buffer(a.id).values()) v += g;
  });
}

Var weighted_sum(Var a, const Matrix& weights) {
  Tape& t = *a.tape;
  check(a.value().same_shape(weights), "weighted_sum");
  double total = 0.0;
  auto av = a.value().values();
  auto w = weights.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (w[i] != 0.0) total += w[i] * av[i];
  }
  return t.push(Matrix(1, 1, total), {a.id}, [a, weights](Tape& t, int self) {
    const double g = t.grad_of(self)(0, 0);
    auto ga = t.grad_buffer(a.id).values();
    auto w = weights.values();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
  });
}

Var add_scalars(std::span<const Var> terms) {
  if (terms.empty()) throw UsageError("add_scalars: no terms");
  Tape& t = *terms.front().tape;
  double total = 0.0;
  std::vector<int> ids;
  for (const Var& v : terms) {
    check(v.rows() == 1 && v.cols() == 1, "add_scalars");
    total += v.scalar();
    ids.push_back(v.id);
  }
  return t.push(Matrix(1, 1, total), ids, [ids](Tape& t, int self) {
    const double g = t.grad_of(self)(0, 0);
    for (int id : ids)
      if (t.needs_grad(id)) t.grad_buffer(id)(0, 0) += g;
  });
}

namespace {

// Forward activations of one LSTM step kept for the backward pass.
struct LstmStepCache {
  std::vector<double> i, f, g, o, c, tanh_c;
};

void lstm_gates(std::span<const double> z, std::span<const double> c_prev, std::size_t h,
                LstmStepCache& s) {
  s.i.resize(h);
  s.f.resize(h);
  s.g.resize(h);
  s.o.resize(h);
  s.c.resize(h);
  s.tanh_c.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    s.i[j] = sigmoid_scalar(z[j]);
    s.f[j] = sigmoid_scalar(z[h + j]);
    s.g[j] = std::tanh(z[2 * h + j]);
    s.o[j] = sigmoid_scalar(z[3 * h + j]);
    s.c[j] = s.f[j] * c_prev[j] + s.i[j] * s.g[j];
    s.tanh_c[j] = std::tanh(s.c[j]);
  }
}

// Given dL/dh and dL/dc at a step, writes dL/dz (1 x 4h) and returns
// dL/dc_prev through `dc_prev`.
void lstm_gate_backward(const LstmStepCache& s, std::span<const double> c_prev,
                        std::span<const double> dh, std::span<const double> dc_in,
                        std::span<double> dz, std::span<double> dc_prev) {
  const std::size_t h = s.i.size();
  for (std::size_t j = 0; j < h; ++j) {
    const double d_o = dh[j] * s.tanh_c[j];
    const double dc = dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_in[j];
    const double di = dc * s.g[j];
    const double dg = dc * s.i[j];
    const double df = dc * c_prev[j];
    dc_prev[j] = dc * s.f[j];
    dz[j] = di * s.i[j] * (1.0 - s.i[j]);
    dz[h + j] = df * s.f[j] * (1.0 - s.f[j]);
    dz[2 * h + j] = dg * (1.0 - s.g[j] * s.g[j]);
    dz[3 * h + j] = d_o * s.o[j] * (1.0 - s.o[j]);
  }
}

}  // namespace

Var lstm_recurrence(Var preact, Var w_rec, bool reverse) {
  Tape& t = *preact.tape;
  const Matrix& pre = preact.value();
  const Matrix& u = w_rec.value();
  const std::size_t h = u.rows();
  check(u.cols() == 4 * h && pre.cols() == 4 * h, "lstm_recurrence");
  const std::size_t T = pre.rows();

  auto cache = std::make_shared<std::vector<LstmStepCache>>(T);
  Matrix out(T, h);
  std::vector<double> z(4 * h);
  std::vector<double> zero(h, 0.0);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t tt = reverse ? T - 1 - step : step;
    std::copy(pre.row(tt).begin(), pre.row(tt).end(), z.begin());
    if (step > 0) {
      const std::size_t prev = reverse ? tt + 1 : tt - 1;
      auto h_prev = out.row(prev);
      for (std::size_t k = 0; k < h; ++k) {
        const double hk = h_prev[k];
        auto uk = u.row(k);
        for (std::size_t j = 0; j < 4 * h; ++j) z[j] += hk * uk[j];
      }
    }
    const std::span<const double> c_prev =
        step > 0 ? std::span<const double>((*cache)[reverse ? tt + 1 : tt - 1].c)
                 : std::span<const double>(zero);
    LstmStepCache& s = (*cache)[tt];
    lstm_gates(z, c_prev, h, s);
    auto dst = out.row(tt);
    for (std::size_t j = 0; j < h; ++j) dst[j] = s.o[j] * s.tanh_c[j];
  }

  return t.push(std::move(out), {preact.id, w_rec.id},
                [preact, w_rec, reverse, cache, h](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& hs = t.value(self);
    const Matrix& u = t.value(w_rec.id);
    const std::size_t T = hs.rows();
    Matrix dpre(T, 4 * h);
    std::vector<double> dh(h), dc(h, 0.0), dc_prev(h), dh_next(h, 0.0);
    std::vector<double> zero(h, 0.0);
    for (std::size_t step = T; step-- > 0;) {
      const std::size_t tt = reverse ? T - 1 - step : step;
      const bool has_prev = step > 0;
      const std::size_t prev = reverse ? tt + 1 : tt - 1;
      for (std::size_t j = 0; j < h; ++j) dh[j] = g(tt, j) + dh_next[j];
      const std::span<const double> c_prev =
          has_prev ? std::span<const double>((*cache)[prev].c) : std::span<const double>(zero);
      auto dz = dpre.row(tt);
      lstm_gate_backward((*cache)[tt], c_prev, dh, dc, dz, dc_prev);
      std::copy(dc_prev.begin(), dc_prev.end(), dc.begin());
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      if (has_prev) {
        for (std::size_t k = 0; k < h; ++k) {
          auto uk = u.row(k);
          double acc = 0.0;
          for (std::size_t j = 0; j < 4 * h; ++j) acc += uk[j] * dz[j];
          dh_next[k] = acc;
        }
      }
    }
    if (t.needs_grad(preact.id)) t.grad_buffer(preact.id) += dpre;
    if (t.needs_grad(w_rec.id)) {
      // dU = sum_t h_prev(t)^T dz(t)
      Matrix& gu = t.grad_buffer(w_rec.id);
      for (std::size_t step = 1; step < T; ++step) {
        const std::size_t tt = reverse ? T - 1 - step : step;
        const std::size_t prev = reverse ? tt + 1 : tt - 1;
        auto h_prev = hs.row(prev);
        auto dz = dpre.row(tt);
        for (std::size_t k = 0; k < h; ++k) {
          const double hk = h_prev[k];
          if (hk == 0.0) continue;
          auto gk = gu.row(k);
          for (std::size_t j = 0; j < 4 * h; ++j) gk[j] += hk * dz[j];
        }
      }
    }
  });
}

Var lstm_cell(Var preact, Var cell_prev) {
  Tape& t = *preact.tape;
  const Matrix& z = preact.value();
  const Matrix& cp = cell_prev.value();
  const std::size_t h = cp.cols();
  check(z.rows() == 1 && cp.rows() == 1 && z.cols() == 4 * h, "lstm_cell");
  auto cache = std::make_shared<LstmStepCache>();
  lstm_gates(z.row(0), cp.row(0), h, *cache);
  Matrix out(1, 2 * h);
  for (std::size_t j = 0; j < h; ++j) {
    out(0, j) = cache->o[j] * cache->tanh_c[j];
    out(0, h + j) = cache->c[j];
  }
  return t.push(std::move(out), {preact.id, cell_prev.id},
                [preact, cell_prev, cache, h](Tape& t, int self) {
    auto g = t.grad_of(self).row(0);
    std::vector<double> dz(4 * h), dc_prev(h);
    lstm_gate_backward(*cache, t.value(cell_prev.id).row(0), g.subspan(0, h), g.subspan(h, h),
                       dz, dc_prev);
    if (t.needs_grad(preact.id)) {
      auto gz = t.grad_buffer(preact.id).row(0);
      for (std::size_t j = 0; j < 4 * h; ++j) gz[j] += dz[j];
    }
    if (t.needs_grad(cell_prev.id)) {
      auto gc = t.grad_buffer(cell_prev.id).row(0);
      for (std::size_t j = 0; j < h; ++j) gc[j] += dc_prev[j];
    }
  });
}

Var conv_location(Var alignment, Var kernels) {
  Tape& t = *alignment.tape;
  const Matrix& a = alignment.value();
  const Matrix& k = kernels.value();
  check(a.rows() == 1 && k.cols() % 2 == 1, "conv_location");
  const std::size_t T = a.cols();
  const std::size_t C = k.rows();
  const std::size_t K = k.cols();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(K / 2);
  Matrix out(T, C);
  for (std::size_t tt = 0; tt < T; ++tt) {
    for (std::size_t w = 0; w < K; ++w) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt + w) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const double av = a(0, static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < C; ++c) out(tt, c) += k(c, w) * av;
    }
  }
  return t.push(std::move(out), {alignment.id, kernels.id},
                [alignment, kernels, T, C, K, half](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& a = t.value(alignment.id);
    const Matrix& k = t.value(kernels.id);
    const bool ga_on = t.needs_grad(alignment.id);
    const bool gk_on = t.needs_grad(kernels.id);
    Matrix* ga = ga_on ? &t.grad_buffer(alignment.id) : nullptr;
    Matrix* gk = gk_on ? &t.grad_buffer(kernels.id) : nullptr;
    for (std::size_t tt = 0; tt < T; ++tt) {
      for (std::size_t w = 0; w < K; ++w) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt + w) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const auto s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < C; ++c) {
          if (ga) (*ga)(0, s) += g(tt, c) * k(c, w);
          if (gk) (*gk)(c, w) += g(tt, c) * a(0, s);
        }
      }
    }
  });
}

Var ctc_nll(Var logits, std::span<const int> labels, bool* feasible) {
  Tape& t = *logits.tape;
  const LogProbLattice lattice = LogProbLattice::from_logits(logits.value(), 0.0);
  auto result = std::make_shared<CtcResult>(ctc_loss(lattice, labels));
  if (feasible) *feasible = result->feasible;
  if (!result->feasible) return t.constant(Matrix(1, 1, 0.0));
  return t.push(Matrix(1, 1, -result->log_prob), {logits.id}, [logits, result](Tape& t, int self) {
    const double g = t.grad_of(self)(0, 0);
    Matrix& gl = t.grad_buffer(logits.id);
    auto src = result->grad.values();
    auto dst = gl.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g * src[i];
  });
}

}  // namespace avsr::ad
