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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "avsr/tape.hpp"
#include "oracles.hpp"

using namespace avsr;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal(0.0, scale);
  return m;
}

using Builder = std::function<Var(std::span<const Var>)>;

// Projects the op output on fixed random weights and compares the tape
// gradient of every input with central differences.
void check_gradients(std::vector<Matrix> inputs, const Builder& build, std::uint64_t seed) {
  Rng rng(seed);
  Matrix weights;
  auto eval = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
    Tape t;
    std::vector<Var> vars;
    for (const Matrix& x : xs) vars.push_back(t.input(x));
    Var out = build(vars);
    if (weights.empty()) weights = random_matrix(out.rows(), out.cols(), rng);
    Var loss = ad::weighted_sum(out, weights);
    if (grads) {
      t.backward(loss);
      for (const Var& v : vars) grads->push_back(t.grad(v));
    }
    return loss.scalar();
  };
  std::vector<Matrix> grads;
  eval(inputs, &grads);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&](std::span<const double> x) {
      std::vector<Matrix> xs = inputs;
      std::copy(x.begin(), x.end(), xs[i].values().begin());
      return eval(xs, nullptr);
    };
    const auto fd = fd_gradient(f, inputs[i].values());
    const std::vector<double> an(grads[i].values().begin(), grads[i].values().end());
    INFO("input " << i);
    CHECK(oracle::rel_err(an, fd) < 1e-4);
  }
}

}  // namespace

TEST_CASE("elementwise and linear ops") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
    const Matrix c = random_matrix(3, 4, rng), r = random_matrix(1, 4, rng);
    check_gradients({a, b}, [](auto v) { return ad::matmul(v[0], v[1]); }, seed);
    check_gradients({a, c}, [](auto v) { return ad::add(v[0], v[1]); }, seed);
    check_gradients({a, c}, [](auto v) { return ad::mul(v[0], v[1]); }, seed);
    check_gradients({a, r}, [](auto v) { return ad::add_row(v[0], v[1]); }, seed);
    check_gradients({a}, [](auto v) { return ad::scale(v[0], -1.7); }, seed);
    check_gradients({a}, [](auto v) { return ad::sigmoid(v[0]); }, seed);
    check_gradients({a}, [](auto v) { return ad::tanh(v[0]); }, seed);
    check_gradients({a}, [](auto v) { return ad::transpose(v[0]); }, seed);
    check_gradients({a}, [](auto v) { return ad::sum(v[0]); }, seed);
  }
}

TEST_CASE("structural ops") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 2, rng);
    check_gradients({a, b}, [](auto v) { return ad::concat_cols(v[0], v[1]); }, seed);
    check_gradients({a}, [](auto v) { return ad::slice_cols(v[0], 1, 2); }, seed);
    check_gradients({a}, [](auto v) { return ad::row(v[0], 2); }, seed);
    check_gradients({a}, [](auto v) {
      const Var rows[] = {ad::row(v[0], 2), ad::row(v[0], 0), ad::row(v[0], 2)};
      return ad::stack_rows(rows);
    }, seed);
    check_gradients({a, b}, [](auto v) {
      const Var terms[] = {ad::sum(v[0]), ad::sum(ad::mul(v[1], v[1]))};
      return ad::add_scalars(terms);
    }, seed);
  }
}

TEST_CASE("softmax family") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Matrix a = random_matrix(3, 5, rng, 2.0);
    check_gradients({a}, [](auto v) { return ad::softmax_rows(v[0]); }, seed);
    check_gradients({a}, [](auto v) { return ad::log_softmax_rows(v[0]); }, seed);
  }
}

TEST_CASE("fused LSTM recurrence in both directions") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t h = 3;
    const Matrix pre = random_matrix(5, 4 * h, rng), u = random_matrix(h, 4 * h, rng, 0.5);
    check_gradients({pre, u}, [](auto v) { return ad::lstm_recurrence(v[0], v[1], false); }, seed);
    check_gradients({pre, u}, [](auto v) { return ad::lstm_recurrence(v[0], v[1], true); }, seed);
  }
}

TEST_CASE("LSTM recurrence equals the step-by-step cell") {
  Rng rng(3);
  const std::size_t h = 4;
  const Matrix pre = random_matrix(6, 4 * h, rng), u = random_matrix(h, 4 * h, rng, 0.5);
  Tape t;
  Var seq = ad::lstm_recurrence(t.input(pre), t.input(u), false);
  Var hidden = t.constant(Matrix(1, h));
  Var cell = t.constant(Matrix(1, h));
  for (std::size_t step = 0; step < 6; ++step) {
    Var z = ad::add(ad::row(t.input(pre), step), ad::matmul(hidden, t.input(u)));
    Var hc = ad::lstm_cell(z, cell);
    hidden = ad::slice_cols(hc, 0, h);
    cell = ad::slice_cols(hc, h, h);
    for (std::size_t j = 0; j < h; ++j) {
      CHECK(hidden.value()(0, j) == doctest::Approx(seq.value()(step, j)).epsilon(1e-14));
    }
  }
}

TEST_CASE("LSTM cell and location convolution") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Matrix z = random_matrix(1, 12, rng), c = random_matrix(1, 3, rng);
    check_gradients({z, c}, [](auto v) { return ad::lstm_cell(v[0], v[1]); }, seed);
    const Matrix align = random_matrix(1, 9, rng), kernels = random_matrix(2, 5, rng);
    check_gradients({align, kernels}, [](auto v) { return ad::conv_location(v[0], v[1]); }, seed);
  }
}

TEST_CASE("location convolution zero-pads the borders") {
  Tape t;
  Matrix a(1, 3);
  a(0, 0) = 1.0;
  a(0, 1) = 2.0;
  a(0, 2) = 3.0;
  Matrix k(1, 3, 1.0);
  const Matrix out = ad::conv_location(t.input(a), t.input(k)).value();
  CHECK(out(0, 0) == 3.0);
  CHECK(out(1, 0) == 6.0);
  CHECK(out(2, 0) == 5.0);
}

TEST_CASE("CTC node gradient") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Matrix logits = random_matrix(6, 4, rng);
    const std::vector<int> y = {2, 0, 2};
    check_gradients({logits}, [&y](auto v) { return ad::ctc_nll(v[0], y); }, seed);
  }
}

TEST_CASE("infeasible CTC node is a zero constant") {
  Tape t;
  Var logits = t.input(Matrix(2, 3));
  bool feasible = true;
  Var loss = ad::ctc_nll(logits, std::vector<int>{1, 1}, &feasible);
  CHECK_FALSE(feasible);
  CHECK(loss.scalar() == 0.0);
}

TEST_CASE("parameters bound twice share one gradient") {
  Matrix w(1, 2, 1.0);
  Tape t;
  Var a = t.param(w);
  Var b = t.param(w);
  CHECK(a.id == b.id);
  Var loss = ad::sum(ad::add(ad::mul(a, a), b));
  t.backward(loss);
  const Matrix g = t.grad(a);
  CHECK(g(0, 0) == 3.0);
  int visited = 0;
  t.for_each_param_grad([&](const Matrix& storage, const Matrix& grad) {
    CHECK(&storage == &w);
    CHECK(grad(0, 1) == 3.0);
    ++visited;
  });
  CHECK(visited == 1);
}

TEST_CASE("inference tapes record no gradients") {
  Matrix w(2, 2, 0.5);
  Tape t(false);
  Var p = t.param(w);
  CHECK_FALSE(t.needs_grad(p.id));
  Var out = ad::sum(ad::tanh(p));
  CHECK(out.scalar() == doctest::Approx(4.0 * std::tanh(0.5)));
}
