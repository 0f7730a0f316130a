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

// Independent reference implementations used by the unit and acceptance
// tests. None of these share code with the library beyond data types.

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "avsr/ctc.hpp"
#include "avsr/numerics.hpp"

namespace avsr::oracle {

// Collapses a frame path: merge repeats, then drop blanks.
inline std::vector<int> collapse(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

// Visits every frame path of a lattice with its log probability.
template <typename Fn>
void for_each_path(const LogProbLattice& L, Fn&& fn) {
  const std::size_t T = L.frames();
  const std::size_t V = L.width();
  std::vector<int> path(T, 0);
  for (;;) {
    double lp = 0.0;
    for (std::size_t t = 0; t < T; ++t) lp += L.at(t, path[t]);
    fn(path, lp);
    std::size_t t = 0;
    while (t < T && static_cast<std::size_t>(++path[t]) == V) path[t++] = 0;
    if (t == T) return;
  }
}

inline double log_add_pair(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log p(y) for every label sequence y with non-zero probability.
inline std::map<std::vector<int>, double> sequence_log_probs(const LogProbLattice& L) {
  std::map<std::vector<int>, double> out;
  for_each_path(L, [&](const std::vector<int>& path, double lp) {
    auto y = collapse(path, L.blank());
    auto it = out.find(y);
    if (it == out.end()) {
      out.emplace(std::move(y), lp);
    } else {
      it->second = log_add_pair(it->second, lp);
    }
  });
  return out;
}

inline double sequence_log_prob(const LogProbLattice& L, const std::vector<int>& y) {
  const auto all = sequence_log_probs(L);
  const auto it = all.find(y);
  return it == all.end() ? -INFINITY : it->second;
}

// log of the mass of paths whose labeling starts with g.
inline double prefix_log_prob(const LogProbLattice& L, const std::vector<int>& g) {
  double total = -INFINITY;
  for (const auto& [y, lp] : sequence_log_probs(L)) {
    if (y.size() >= g.size() && std::equal(g.begin(), g.end(), y.begin())) {
      total = log_add_pair(total, lp);
    }
  }
  return total;
}

// Plain Levenshtein distance by the textbook recurrence.
template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t best = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      best = std::min(best, d[i - 1][j] + 1);
      best = std::min(best, d[i][j - 1] + 1);
      d[i][j] = best;
    }
  }
  return d[a.size()][b.size()];
}

// Random lattice with rows normalized by a softmax of N(0, scale) scores.
inline LogProbLattice random_lattice(std::size_t T, std::size_t V, Rng& rng, double scale = 1.5) {
  Matrix logits(T, V);
  for (double& v : logits.values()) v = rng.normal(0.0, scale);
  return LogProbLattice::from_logits(logits, 100.0);
}

// Relative error with the library's floor, restated here so the tests do
// not depend on the code under test for their own metric.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-7});
  return std::sqrt(diff) / denom;
}

}  // namespace avsr::oracle
