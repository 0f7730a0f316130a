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

// Checkpoint container shared by hybrid models and language models.
//
// Layout (little-endian):
//   8 bytes  magic "AVSRCKPT"
//   u32      format version (1)
//   u64      length N of the metadata block
//   N bytes  JSON metadata: kind, alphabet, architecture config, free-form
//            tags and the ordered tensor table [{name, rows, cols}]
//   f64 payloads of every tensor in table order, row-major

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "avsr/models.hpp"

namespace avsr {

using CheckpointTags = std::map<std::string, std::string>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model(const HybridModel& model, const CheckpointTags& tags = {});
HybridModel deserialize_model(const std::string& bytes, CheckpointTags* tags = nullptr);
std::string serialize_lm(const LmParams& lm, const CheckpointTags& tags = {});
LmParams deserialize_lm(const std::string& bytes, CheckpointTags* tags = nullptr);

void save_model(const std::filesystem::path& path, const HybridModel& model,
                const CheckpointTags& tags = {});
HybridModel load_model(const std::filesystem::path& path, CheckpointTags* tags = nullptr);
void save_lm(const std::filesystem::path& path, const LmParams& lm,
             const CheckpointTags& tags = {});
LmParams load_lm(const std::filesystem::path& path, CheckpointTags* tags = nullptr);

// FNV-1a over the serialized bytes; equal hashes for bit-identical weights.
std::uint64_t fingerprint(const std::string& bytes);

}  // namespace avsr
