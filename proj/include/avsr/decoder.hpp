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

// Joint CTC/attention beam search with RNN-LM shallow fusion, and
// score-level fusion of several recognition streams.
//
// Each live hypothesis carries, per stream, its CTC prefix state, decoder
// state and LM state. A candidate's stream score is
//   lambda * log p_ctc(prefix) + (1 - lambda) * log p_att + beta * log p_lm
// where log p_ctc is the CTC prefix probability (the termination
// probability once eos is emitted) and the other two terms are running
// sums. Streams are combined with fixed weights; a stream with weight 0 is
// never evaluated.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avsr/ctc.hpp"
#include "avsr/models.hpp"

namespace avsr {

struct BeamConfig {
  double ctc_weight = 0.1;  // lambda
  double lm_weight = 0.0;   // beta; 0.4 for audio and AV models, 0.1 for visual
  std::size_t beam_width = 20;
  // 0 derives ceil(1.5 * T' / frames-per-shortest-symbol) from the input.
  std::size_t max_output_len = 0;
  double min_symbol_seconds = 0.08;

  void validate() const;
};

enum class FusionMode { early, late, late_rescore };

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& name);

struct FusionConfig {
  FusionMode mode = FusionMode::early;
  double gamma = 0.85;  // audio weight in late fusion
};

// One recognition stream ready for decoding: encoder output of a single
// forward pass, the CTC lattice derived from it, and the models to score with.
struct DecodeStream {
  const HybridModel* model = nullptr;
  const LmParams* lm = nullptr;  // optional; required when lm_weight > 0
  EncoderStates states;
  LogProbLattice lattice;
};

// Runs the encoder and CTC head on `streams` (one sequence, or audio and
// visual for an early-fusion model).
DecodeStream prepare_stream(const HybridModel& model, std::span<const FeatureSequence> streams,
                            const LmParams* lm = nullptr);

struct StreamScores {
  LogProb ctc = 0.0;
  LogProb att = 0.0;
  LogProb lm = 0.0;
};

// lambda * ctc + (1 - lambda) * att + beta * lm, with zero-weighted terms
// dropped so that an impossible term does not poison the sum.
LogProb joint_score(const StreamScores& s, const BeamConfig& cfg);

struct StreamHypothesisState {
  StreamScores scores;
  CtcPrefixState ctc;
  AttentionState att;
  LmState lm;
};

struct Hypothesis {
  std::vector<int> prefix;
  std::vector<StreamHypothesisState> streams;  // inactive streams left empty
  LogProb score = 0.0;
};

LogProb joint_score(const Hypothesis& h, const BeamConfig& cfg);

struct DecodeResult {
  std::vector<int> labels;  // without eos
  LogProb score = kLogZero;
  std::vector<StreamScores> streams;
};

// Finished hypotheses ranked by score (descending, ties by label sequence).
std::vector<DecodeResult> beam_search(const DecodeStream& stream, const BeamConfig& cfg);

// A single synchronized beam over sum_s weight_s * joint_s. `configs` gives
// lambda and beta per stream; width and length limits come from configs[0].
std::vector<DecodeResult> fused_beam_search(std::span<const DecodeStream> streams,
                                            std::span<const BeamConfig> configs,
                                            std::span<const double> weights);

// gamma * joint_audio + (1 - gamma) * joint_visual, either per step
// (FusionMode::late) or by rescoring the union of both n-best lists
// (FusionMode::late_rescore).
std::vector<DecodeResult> late_fusion_search(const DecodeStream& audio, const DecodeStream& visual,
                                             const BeamConfig& audio_cfg,
                                             const BeamConfig& visual_cfg,
                                             const FusionConfig& fusion);

// Scores a complete sequence (implicitly followed by eos) under one stream.
StreamScores score_sequence(const DecodeStream& stream, std::span<const int> labels);

// Maximum hypothesis length for an input of `frames` frames at `fps`.
std::size_t derive_max_output_len(const BeamConfig& cfg, std::size_t frames, double fps);

// Tab-separated decode record:
//   id, hypothesis text, score, then ctc, att, lm for every stream.
std::string format_decode_record(const std::string& id, const Alphabet& alphabet,
                                 const DecodeResult& result);

}  // namespace avsr
