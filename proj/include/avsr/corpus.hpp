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

// Corpus manifests and the per-system feature frontends.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avsr/features.hpp"

namespace avsr {

// One manifest line: id, text, seed, duration in seconds, tab-separated.
// The seed regenerates the utterance's audio and video exactly.
struct UtteranceRecord {
  std::string id;
  std::string text;
  std::uint64_t seed = 0;
  double duration = 0.0;

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

// Utterance i gets seed derive_seed(seed, i) and id "<prefix>-<i>" (zero
// padded). Its transcript is drawn from derive_seed(utterance seed, 1).
std::vector<UtteranceRecord> generate_corpus(const SyntheticVoice& voice, std::size_t count,
                                             std::uint64_t seed, const std::string& prefix);

void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::string& path);
std::string format_manifest(const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> parse_manifest(const std::string& text);

SyntheticUtterance render(const UtteranceRecord& record, const SyntheticVoice& voice);

// Recognition systems. AV-late has no model of its own; it decodes the A and
// V models together.
enum class SystemKind { audio, visual, av_early, av_late };

std::string to_string(SystemKind kind);  // "A", "V", "AV-early", "AV-late"
SystemKind parse_system_kind(const std::string& name);

// Builds model inputs from (possibly noisy) audio and the visual stream:
//   A        log-mel at 100 fps
//   V        visual upsampled to 50 fps
//   AV-early log-mel decimated to 50 fps and visual at 50 fps, equal lengths
// Every stream is normalized per utterance and per dimension.
class Frontend {
 public:
  explicit Frontend(double sample_rate);

  std::vector<FeatureSequence> operator()(SystemKind kind, const Waveform& audio,
                                          const FeatureSequence& visual) const;
  FeatureSequence audio(const Waveform& w, double fps) const;
  FeatureSequence visual(const FeatureSequence& v) const;

 private:
  LogMelExtractor mel_;
};

inline constexpr double kFusionFps = 50.0;

}  // namespace avsr
