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

#include "avsr/ctc.hpp"

#include <cmath>
#include <string>

#include "avsr/error.hpp"

namespace avsr {

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const LogProb norm = log_sum_exp(logits.row(t));
    auto src = logits.row(t);
    auto dst = out.row(t);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] - norm;
  }
  return out;
}

LogProbLattice LogProbLattice::from_logits(const Matrix& logits, double fps) {
  return LogProbLattice{log_softmax_rows(logits), fps};
}

void LogProbLattice::validate(double tolerance) const {
  if (width() < 2) throw UsageError("lattice needs at least one label plus blank");
  for (std::size_t t = 0; t < frames(); ++t) {
    const LogProb total = log_sum_exp(log_probs.row(t));
    if (!(std::abs(total) <= tolerance)) {
      throw UsageError("lattice row " + std::to_string(t) + " is not normalized");
    }
  }
}

std::size_t ctc_min_frames(std::span<const int> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

CtcResult ctc_loss(const LogProbLattice& lattice, std::span<const int> labels) {
  if (labels.empty()) throw UsageError("ctc_loss: empty target");
  const int blank = lattice.blank();
  for (int y : labels) {
    if (y < 0 || y >= blank) {
      throw UsageError("ctc_loss: target symbol " + std::to_string(y) + " is not a label");
    }
  }
  const std::size_t T = lattice.frames();
  const std::size_t V = lattice.width();
  CtcResult result;
  result.grad = Matrix(T, V);
  if (T == 0 || ctc_min_frames(labels) > T) return result;

  // Blank-interleaved target y' of length 2U + 1.
  const std::size_t S = 2 * labels.size() + 1;
  std::vector<int> ext(S, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  // alpha includes the emission at t; beta covers frames after t only, so
  // alpha_t(s) + beta_t(s) is the mass of all paths through (t, s).
  Matrix alpha(T, S, kLogZero);
  Matrix beta(T, S, kLogZero);
  alpha(0, 0) = lattice.at(0, ext[0]);
  if (S > 1) alpha(0, 1) = lattice.at(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      LogProb acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc == kLogZero ? kLogZero : acc + lattice.at(t, ext[s]);
    }
  }
  beta(T - 1, S - 1) = 0.0;
  if (S > 1) beta(T - 1, S - 2) = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      LogProb acc = beta(t + 1, s) + lattice.at(t + 1, ext[s]);
      if (s + 1 < S) acc = log_add(acc, beta(t + 1, s + 1) + lattice.at(t + 1, ext[s + 1]));
      if (s + 2 < S && can_skip(s + 2))
        acc = log_add(acc, beta(t + 1, s + 2) + lattice.at(t + 1, ext[s + 2]));
      beta(t, s) = acc;
    }
  }

  LogProb total = alpha(T - 1, S - 1);
  if (S > 1) total = log_add(total, alpha(T - 1, S - 2));
  if (total == kLogZero) return result;

  result.log_prob = total;
  result.feasible = true;
  Matrix occupancy(T, V, kLogZero);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const LogProb mass = alpha(t, s) + beta(t, s);
      if (mass == kLogZero) continue;
      const auto k = static_cast<std::size_t>(ext[s]);
      occupancy(t, k) = log_add(occupancy(t, k), mass - total);
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < V; ++k) {
      result.grad(t, k) = std::exp(lattice.log_probs(t, k)) - std::exp(occupancy(t, k));
    }
  }
  return result;
}

CtcPrefixState ctc_prefix_init(const LogProbLattice& lattice) {
  const std::size_t T = lattice.frames();
  CtcPrefixState state;
  state.nonblank.assign(T, kLogZero);
  state.blank.assign(T, kLogZero);
  LogProb cumulative = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    cumulative += lattice.at(t, lattice.blank());
    state.blank[t] = cumulative;
  }
  return state;
}

namespace {

LogProb terminate_score(const CtcPrefixState& state) {
  if (state.blank.empty()) return state.last_label == kCtcEnd ? 0.0 : kLogZero;
  return log_add(state.nonblank.back(), state.blank.back());
}

}  // namespace

CtcExtension ctc_prefix_extend(const CtcPrefixState& state, int label,
                               const LogProbLattice& lattice) {
  if (label == kCtcEnd) return {state, terminate_score(state)};
  if (label < 0 || label >= lattice.blank()) {
    throw UsageError("ctc_prefix_extend: symbol " + std::to_string(label) + " is not a label");
  }
  const std::size_t T = lattice.frames();
  const int blank = lattice.blank();
  CtcExtension ext;
  CtcPrefixState& next = ext.state;
  next.nonblank.assign(T, kLogZero);
  next.blank.assign(T, kLogZero);
  next.last_label = label;
  if (T == 0) {
    next.prefix_log_prob = kLogZero;
    ext.score = kLogZero;
    return ext;
  }

  // Only the empty prefix can emit its first label at frame 0.
  if (state.last_label == kCtcEnd) next.nonblank[0] = lattice.at(0, label);
  LogProb psi = next.nonblank[0];
  for (std::size_t t = 1; t < T; ++t) {
    // Mass of g ending at t-1 that may be followed by a fresh `label`: a
    // repeat of the last label must be separated by blank.
    const LogProb phi = label == state.last_label
                            ? state.blank[t - 1]
                            : log_add(state.blank[t - 1], state.nonblank[t - 1]);
    const LogProb emit = lattice.at(t, label);
    next.nonblank[t] = log_add(next.nonblank[t - 1], phi) + emit;
    next.blank[t] = log_add(next.blank[t - 1], next.nonblank[t - 1]) + lattice.at(t, blank);
    if (phi != kLogZero) psi = log_add(psi, phi + emit);
  }
  next.prefix_log_prob = psi;
  ext.score = psi;
  return ext;
}

std::vector<CtcExtension> ctc_prefix_extend_all(const CtcPrefixState& state,
                                                const LogProbLattice& lattice) {
  std::vector<CtcExtension> out;
  out.reserve(lattice.width());
  for (int c = 0; c < lattice.blank(); ++c) out.push_back(ctc_prefix_extend(state, c, lattice));
  out.push_back(ctc_prefix_extend(state, kCtcEnd, lattice));
  return out;
}

}  // namespace avsr
