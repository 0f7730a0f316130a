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

// Connectionist temporal classification: the training loss (negative
// log-likelihood with its analytic gradient) and the label-synchronous
// prefix scorer used during joint decoding.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "avsr/numerics.hpp"

namespace avsr {

// Per-frame label log-posteriors, T x (labels + 1). The last column is blank.
struct LogProbLattice {
  Matrix log_probs;
  double fps = 0.0;

  std::size_t frames() const { return log_probs.rows(); }
  std::size_t width() const { return log_probs.cols(); }
  int blank() const { return static_cast<int>(log_probs.cols()) - 1; }
  LogProb at(std::size_t t, int k) const { return log_probs(t, static_cast<std::size_t>(k)); }

  // Row-wise log-softmax of unnormalized scores.
  static LogProbLattice from_logits(const Matrix& logits, double fps);
  // Throws UsageError unless every row is normalized within `tolerance`.
  void validate(double tolerance = 1e-9) const;
};

// Row-wise log-softmax.
Matrix log_softmax_rows(const Matrix& logits);

struct CtcResult {
  LogProb log_prob = kLogZero;
  // d(-log p) / d(logits) where the lattice is log_softmax(logits): the
  // per-frame softmax minus the expected label occupancy. Zero if infeasible.
  Matrix grad;
  bool feasible = false;
};

// Minimum number of frames needed to emit `labels`: one per label plus one
// separating blank for every adjacent repeat.
std::size_t ctc_min_frames(std::span<const int> labels);

// log p_ctc(labels | x) summed over all blank-augmented monotonic
// alignments. Infeasible targets return -inf with a zero gradient.
CtcResult ctc_loss(const LogProbLattice& lattice, std::span<const int> labels);

// Passed to ctc_prefix_extend to score termination of the prefix.
inline constexpr int kCtcEnd = -1;

// Forward variables of a label prefix g, split by whether the partial
// alignment ending at frame t last emitted blank or a label.
struct CtcPrefixState {
  std::vector<LogProb> nonblank;  // r^n_t(g)
  std::vector<LogProb> blank;     // r^b_t(g)
  int last_label = kCtcEnd;       // kCtcEnd for the empty prefix
  LogProb prefix_log_prob = 0.0;  // log of the mass of alignments starting with g
};

struct CtcExtension {
  CtcPrefixState state;
  LogProb score = kLogZero;
};

CtcPrefixState ctc_prefix_init(const LogProbLattice& lattice);

// Extends the prefix by `label`. The returned score is the prefix
// probability of g + label. With label == kCtcEnd the score is the
// probability that the labeling equals g exactly and the state is returned
// unchanged.
CtcExtension ctc_prefix_extend(const CtcPrefixState& state, int label,
                               const LogProbLattice& lattice);

// Scores every label plus termination at once; element `blank()` of the
// returned vector holds the termination score. Used by the beam search.
std::vector<CtcExtension> ctc_prefix_extend_all(const CtcPrefixState& state,
                                                const LogProbLattice& lattice);

}  // namespace avsr
