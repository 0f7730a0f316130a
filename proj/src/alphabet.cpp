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

#include "avsr/alphabet.hpp"

#include <string>

#include "avsr/error.hpp"

namespace avsr {

Alphabet::Alphabet(std::string symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty()) throw UsageError("alphabet: no labels");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_.find(symbols_[i], i + 1) != std::string::npos) {
      throw UsageError(std::string("alphabet: duplicate symbol '") + symbols_[i] + "'");
    }
  }
}

int Alphabet::id(char symbol) const {
  const auto pos = symbols_.find(symbol);
  if (pos == std::string::npos) {
    throw UsageError(std::string("symbol '") + symbol + "' is not in the alphabet");
  }
  return static_cast<int>(pos);
}

char Alphabet::symbol(int id) const {
  if (!is_label(id)) throw UsageError("id " + std::to_string(id) + " is not a label");
  return symbols_[static_cast<std::size_t>(id)];
}

std::vector<int> Alphabet::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id(c));
  return ids;
}

std::string Alphabet::decode(std::span<const int> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(symbol(i));
  return out;
}

std::size_t Alphabet::output_slot(int id) const {
  if (is_label(id)) return static_cast<std::size_t>(id);
  if (id == eos_id()) return num_labels();
  throw UsageError("id " + std::to_string(id) + " is not an output symbol");
}

int Alphabet::output_id(std::size_t slot) const {
  if (slot < num_labels()) return static_cast<int>(slot);
  if (slot == num_labels()) return eos_id();
  throw UsageError("output slot out of range");
}

std::size_t Alphabet::embed_slot(int id) const {
  if (is_label(id)) return static_cast<std::size_t>(id);
  if (id == sos_id()) return num_labels();
  if (id == blank_id()) throw UsageError("blank is CTC-only and cannot be fed to a decoder");
  throw UsageError("id " + std::to_string(id) + " cannot be fed to a decoder");
}

}  // namespace avsr
