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

#include "avsr/corpus.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avsr/config.hpp"
#include "avsr/error.hpp"

namespace avsr {

std::vector<UtteranceRecord> generate_corpus(const SyntheticVoice& voice, std::size_t count,
                                             std::uint64_t seed, const std::string& prefix) {
  const TextGenerator text(voice.config());
  const Alphabet alphabet = voice.config().make_alphabet();
  std::vector<UtteranceRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    UtteranceRecord r;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu", i);
    r.id = prefix + "-" + buf;
    r.seed = derive_seed(seed, i);
    Rng rng(derive_seed(r.seed, 1));
    const std::vector<int> labels = text.sample(rng);
    r.text = alphabet.decode(labels);
    const SyntheticUtterance u = synthesize_utterance(labels, voice, r.seed);
    r.duration = u.audio.duration();
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_manifest(const std::vector<UtteranceRecord>& records) {
  std::string out;
  for (const UtteranceRecord& r : records) {
    if (r.id.find_first_of("\t\n") != std::string::npos ||
        r.text.find_first_of("\t\n") != std::string::npos) {
      throw UsageError("manifest fields cannot contain tabs or newlines");
    }
    out += r.id + "\t" + r.text + "\t" + std::to_string(r.seed) + "\t" +
           format_double(r.duration) + "\n";
  }
  return out;
}

std::vector<UtteranceRecord> parse_manifest(const std::string& text) {
  std::vector<UtteranceRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 4 fields");
    }
    UtteranceRecord r;
    r.id = fields[0];
    r.text = fields[1];
    const auto& s = fields[2];
    if (std::from_chars(s.data(), s.data() + s.size(), r.seed).ec != std::errc{}) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": bad seed");
    }
    try {
      r.duration = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": bad duration");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest " + path);
  out << format_manifest(records);
}

std::vector<UtteranceRecord> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open manifest " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

SyntheticUtterance render(const UtteranceRecord& record, const SyntheticVoice& voice) {
  const Alphabet alphabet = voice.config().make_alphabet();
  return synthesize_utterance(alphabet.encode(record.text), voice, record.seed);
}

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::audio: return "A";
    case SystemKind::visual: return "V";
    case SystemKind::av_early: return "AV-early";
    case SystemKind::av_late: return "AV-late";
  }
  return "A";
}

SystemKind parse_system_kind(const std::string& name) {
  if (name == "A") return SystemKind::audio;
  if (name == "V") return SystemKind::visual;
  if (name == "AV-early" || name == "AV") return SystemKind::av_early;
  if (name == "AV-late") return SystemKind::av_late;
  throw UsageError("unknown system '" + name + "' (expected A, V, AV-early or AV-late)");
}

Frontend::Frontend(double sample_rate) : mel_(sample_rate) {}

FeatureSequence Frontend::audio(const Waveform& w, double fps) const {
  FeatureSequence f = mel_(w);
  if (fps != f.fps) f = resample_frames(f, fps);
  normalize_utterance(f);
  return f;
}

FeatureSequence Frontend::visual(const FeatureSequence& v) const {
  FeatureSequence f = resample_frames(v, kFusionFps);
  normalize_utterance(f);
  return f;
}

std::vector<FeatureSequence> Frontend::operator()(SystemKind kind, const Waveform& audio_in,
                                                  const FeatureSequence& visual_in) const {
  switch (kind) {
    case SystemKind::audio: return {audio(audio_in, 100.0)};
    case SystemKind::visual: return {visual(visual_in)};
    case SystemKind::av_early: {
      FeatureSequence a = audio(audio_in, kFusionFps);
      FeatureSequence v = visual(visual_in);
      align_lengths(a, v);
      return {std::move(a), std::move(v)};
    }
    case SystemKind::av_late: break;
  }
  throw UsageError("AV-late has no single-model frontend; decode A and V streams instead");
}

}  // namespace avsr
