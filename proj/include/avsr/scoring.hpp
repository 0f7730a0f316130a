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

// Levenshtein scoring for WER and CER.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace avsr {

struct ErrorReport {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  // (S + D + I) / N; may exceed 1.
  double rate() const;
  ErrorReport& operator+=(const ErrorReport& other);
};

// Minimal-cost alignment. Among equal-cost alignments the backtrace prefers
// a substitution (or match), then a deletion, then an insertion.
ErrorReport edit_distance_report(const std::vector<std::string>& reference,
                                 const std::vector<std::string>& hypothesis);

// Words split on single spaces (empty words dropped).
std::vector<std::string> word_tokens(std::string_view text);
// Every character except spaces.
std::vector<std::string> char_tokens(std::string_view text);

ErrorReport word_errors(std::string_view reference, std::string_view hypothesis);
ErrorReport char_errors(std::string_view reference, std::string_view hypothesis);

}  // namespace avsr
