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

// Flat key=value text files. Blank lines and lines starting with '#' are
// ignored; keys keep their file order when written back.

#pragma once

#include <map>
#include <string>
#include <vector>

namespace avsr {

class KeyValueFile {
 public:
  static KeyValueFile read(const std::string& path);
  static KeyValueFile parse(const std::string& text);
  void write(const std::string& path) const;
  std::string str() const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  // Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
};

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace avsr
