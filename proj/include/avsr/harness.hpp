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

// Recognition for every system, corpus evaluation and the SNR sweep.

#pragma once

#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include "avsr/corpus.hpp"
#include "avsr/decoder.hpp"
#include "avsr/scoring.hpp"
#include "avsr/training.hpp"

namespace avsr {

// Encoder shape for a system: 80 log-mel inputs for A, the corpus's visual
// width for V, both branches for AV-early.
EncoderConfig encoder_config_for(SystemKind system, const CorpusConfig& corpus,
                                 std::size_t hidden = 32, std::size_t layers = 2);

HybridModel make_system_model(SystemKind system, const CorpusConfig& corpus, std::uint64_t seed,
                              std::size_t hidden = 32, std::size_t layers = 2);

// Trained models available to the harness; unset pointers mean "absent".
struct Recognizers {
  const HybridModel* audio = nullptr;
  const HybridModel* visual = nullptr;
  const HybridModel* av_early = nullptr;
  const LmParams* lm = nullptr;
};

struct EvalConfig {
  BeamConfig audio_beam{0.1, 0.4};
  BeamConfig visual_beam{0.1, 0.1};
  BeamConfig av_beam{0.1, 0.4};
  FusionConfig fusion{FusionMode::late, 0.85};
};

// Throws ConfigError when a model that `system` needs is missing.
void require_models(SystemKind system, const Recognizers& models);

// Decodes one utterance; `audio` may already be noisy.
DecodeResult recognize(SystemKind system, const Recognizers& models, const EvalConfig& cfg,
                       const Frontend& frontend, const Waveform& audio,
                       const FeatureSequence& visual);

struct Transcript {
  std::string id;
  std::string reference;
  std::string hypothesis;
  DecodeResult result;
};

struct EvalReport {
  ErrorReport words;
  ErrorReport chars;
  std::vector<Transcript> transcripts;

  double wer() const { return words.rate(); }
  double cer() const { return chars.rate(); }
};

// Audio of utterance i is corrupted with an excerpt drawn from
// derive_seed(seed, i), so every system hears the same noise.
EvalReport evaluate(SystemKind system, const Recognizers& models, const EvalConfig& cfg,
                    const std::vector<Utterance>& utterances, const NoiseSpec& noise,
                    const NoiseBank& bank, std::uint64_t seed);

struct SweepConfig {
  std::vector<NoiseKind> kinds{std::begin(kAllNoiseKinds), std::end(kAllNoiseKinds)};
  std::vector<double> snrs{-5.0, 0.0, 5.0, 10.0, 15.0, 20.0};
  std::vector<SystemKind> systems{SystemKind::audio, SystemKind::visual, SystemKind::av_early,
                                  SystemKind::av_late};
  std::uint64_t seed = 1;
  EvalConfig eval;
};

struct SweepResult {
  NoiseKind noise = NoiseKind::white;
  double snr_db = 0.0;
  SystemKind system = SystemKind::audio;
  double wer = 0.0;
  double cer = 0.0;
};

struct SweepReport {
  std::vector<SweepResult> rows;  // sorted by noise, SNR, system
  double max_snr_error_db = 0.0;  // over every mixed utterance
};

SweepReport noise_sweep(const Recognizers& models, const std::vector<Utterance>& utterances,
                        const NoiseBank& bank, const SweepConfig& cfg);

// Header "noise,snr_db,system,wer,cer".
std::string sweep_csv(const std::vector<SweepResult>& rows);

}  // namespace avsr
