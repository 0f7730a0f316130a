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

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avsr {

// Character labels plus the three control symbols. Ids are contiguous:
// labels occupy [0, L), then blank = L, eos = L + 1, sos = L + 2.
//
// The attention decoder and the LM predict over labels + eos ("output
// slots", eos in slot L) and consume labels + sos ("embedding slots", sos in
// slot L). The CTC lattice is labels + blank with blank last.
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::string symbols);

  const std::string& symbols() const { return symbols_; }
  std::size_t num_labels() const { return symbols_.size(); }
  int blank_id() const { return static_cast<int>(symbols_.size()); }
  int eos_id() const { return blank_id() + 1; }
  int sos_id() const { return blank_id() + 2; }
  bool is_label(int id) const { return id >= 0 && id < blank_id(); }

  int id(char symbol) const;
  char symbol(int id) const;
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  std::size_t output_size() const { return num_labels() + 1; }
  std::size_t output_slot(int id) const;
  int output_id(std::size_t slot) const;
  std::size_t embed_size() const { return num_labels() + 1; }
  std::size_t embed_slot(int id) const;

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  std::string symbols_;
};

// Ten letters and a space.
inline constexpr std::string_view kDefaultAlphabet = "abcdefghij ";

}  // namespace avsr
