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

// Reverse-mode differentiation over matrix-valued nodes. Ops evaluate
// eagerly and record a backward closure; `Tape::backward` replays them in
// reverse. The LSTM recurrence, the location convolution and the CTC loss
// are single fused nodes with hand-written backward passes.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "avsr/numerics.hpp"

namespace avsr::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  // A tape built with record_gradients = false keeps no backward closures
  // and is meant for inference.
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Matrix value);
  // Leaf whose gradient is tracked.
  Var input(Matrix value);
  // Leaf aliasing external parameter storage. Binding the same matrix twice
  // returns the same node, so its gradient accumulates across uses.
  Var param(const Matrix& storage);
  // Leaf aliasing external storage that never receives a gradient. The
  // storage must outlive the tape.
  Var external(const Matrix& storage);

  const Matrix& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  // Seeds d(out)/d(out) = 1 for a 1x1 node and propagates.
  void backward(Var out);

  // Gradient of the last backward() target w.r.t. a node; zeros if the
  // node did not contribute.
  Matrix grad(Var v) const;
  // Visits every bound parameter that received a gradient.
  void for_each_param_grad(
      const std::function<void(const Matrix& storage, const Matrix& grad)>& fn) const;

  std::size_t size() const { return nodes_.size(); }

  // Op plumbing.
  using Backward = std::function<void(Tape&, int self)>;
  Var push(Matrix value, std::vector<int> parents, Backward backward);
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }
  // Lazily allocated gradient buffer for accumulation into a parent.
  Matrix& grad_buffer(int id);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  bool record_ = true;
  std::deque<Node> nodes_;
  std::unordered_map<const Matrix*, int> params_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
// a + row broadcast over every row of a.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var sigmoid(Var a);
Var tanh(Var a);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var row(Var a, std::size_t r);
Var stack_rows(std::span<const Var> rows);
Var transpose(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var sum(Var a);
// sum(weights .* a) for constant weights of the same shape.
Var weighted_sum(Var a, const Matrix& weights);
Var add_scalars(std::span<const Var> terms);

// LSTM over the rows of `preact` (T x 4h, already holding x W + b), gate
// order [input, forget, cell, output], zero initial state. Processes rows in
// reverse when `reverse`; output rows stay in input order. Returns T x h.
Var lstm_recurrence(Var preact, Var w_rec, bool reverse);

// Single LSTM step from preactivations (x W + h_prev U + b, 1 x 4h) and the
// previous cell (1 x h). Returns [h | c], 1 x 2h.
Var lstm_cell(Var preact, Var cell_prev);

// Same-padded 1-D convolution of an alignment row (1 x T) with C kernels of
// odd width K (C x K). Returns T x C.
Var conv_location(Var alignment, Var kernels);

// -log p_ctc(labels | log_softmax(logits)). An infeasible target yields a
// zero-valued node with no gradient and sets *feasible = false.
Var ctc_nll(Var logits, std::span<const int> labels, bool* feasible = nullptr);

}  // namespace avsr::ad
