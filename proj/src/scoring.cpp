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

#include "avsr/scoring.hpp"

#include <algorithm>

#include "avsr/error.hpp"

namespace avsr {

double ErrorReport::rate() const {
  if (reference_length == 0) throw UsageError("error rate of an empty reference");
  return static_cast<double>(errors()) / static_cast<double>(reference_length);
}

ErrorReport& ErrorReport::operator+=(const ErrorReport& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_length += o.reference_length;
  return *this;
}

ErrorReport edit_distance_report(const std::vector<std::string>& ref,
                                 const std::vector<std::string>& hyp) {
  if (ref.empty()) throw UsageError("reference is empty");
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [m, &d](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  ErrorReport r;
  r.reference_length = n;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++r.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  return r;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t sp = text.find(' ', start);
    const std::size_t end = sp == std::string_view::npos ? text.size() : sp;
    if (end > start) out.emplace_back(text.substr(start, end - start));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  return out;
}

std::vector<std::string> char_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (char c : text) {
    if (c != ' ') out.emplace_back(1, c);
  }
  return out;
}

ErrorReport word_errors(std::string_view reference, std::string_view hypothesis) {
  return edit_distance_report(word_tokens(reference), word_tokens(hypothesis));
}

ErrorReport char_errors(std::string_view reference, std::string_view hypothesis) {
  return edit_distance_report(char_tokens(reference), char_tokens(hypothesis));
}

}  // namespace avsr
