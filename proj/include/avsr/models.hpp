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

// Toy-scale neural components of the hybrid CTC/attention recognizer:
// BLSTM encoders (single stream and early fusion), a location-aware
// attention decoder, the CTC head and a character RNN language model.
//
// Every forward pass is written once against the differentiation tape
// (namespace avsr::graph); the plain functions below wrap those for
// inference and return ordinary matrices.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avsr/alphabet.hpp"
#include "avsr/ctc.hpp"
#include "avsr/features.hpp"
#include "avsr/numerics.hpp"
#include "avsr/tape.hpp"

namespace avsr {

// Gate order [input, forget, cell, output].
struct LstmParams {
  Matrix w_in;   // D x 4h
  Matrix w_rec;  // h x 4h
  Matrix bias;   // 1 x 4h

  std::size_t input_dim() const { return w_in.rows(); }
  std::size_t hidden() const { return w_rec.rows(); }
};

struct BlstmLayer {
  LstmParams forward;
  LstmParams backward;
};

struct BlstmStack {
  std::vector<BlstmLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().forward.input_dim(); }
  std::size_t output_dim() const {
    return layers.empty() ? 0 : 2 * layers.back().forward.hidden();
  }
};

enum class EncoderTopology { single_stream, early_fusion };

struct EncoderConfig {
  EncoderTopology topology = EncoderTopology::single_stream;
  std::size_t input_dim = 80;   // the only stream, or the audio stream
  std::size_t visual_dim = 16;  // early fusion only
  std::size_t hidden = 32;      // per direction
  std::size_t layers = 2;       // per stack; early fusion has 3 stacks
};

struct EncoderParams {
  EncoderConfig config;
  BlstmStack trunk;          // the whole encoder for single-stream models
  BlstmStack audio_branch;   // early fusion only
  BlstmStack visual_branch;  // early fusion only

  std::size_t output_dim() const { return trunk.output_dim(); }
  std::size_t num_streams() const {
    return config.topology == EncoderTopology::early_fusion ? 2 : 1;
  }
};

// Frame-wise hidden representations, T x 2h.
struct EncoderStates {
  Matrix states;
  double fps = 0.0;

  std::size_t num_frames() const { return states.rows(); }
};

struct DecoderConfig {
  std::size_t embed_dim = 16;
  std::size_t hidden = 64;
  std::size_t attention_dim = 32;
  std::size_t conv_channels = 4;
  std::size_t conv_width = 7;
};

struct AttentionParams {
  Matrix w_query;     // hidden x A
  Matrix w_key;       // enc x A
  Matrix w_location;  // C x A
  Matrix bias;        // 1 x A
  Matrix w_score;     // A x 1
  Matrix conv;        // C x K
};

struct DecoderParams {
  DecoderConfig config;
  Matrix embedding;  // (labels + sos) x E
  LstmParams cell;   // (E + enc) -> hidden
  AttentionParams attention;
  Matrix w_out;  // (hidden + enc) x (labels + eos)
  Matrix b_out;  // 1 x (labels + eos)
};

// Decoder-side recurrent state carried between output steps.
struct AttentionState {
  Matrix alignment;  // 1 x T, previous attention weights
  Matrix hidden;     // 1 x decoder hidden
  Matrix cell;       // 1 x decoder hidden
};

struct LmConfig {
  std::size_t embed_dim = 16;
  std::size_t hidden = 64;
};

struct LmParams {
  LmConfig config;
  Alphabet alphabet;
  Matrix embedding;  // (labels + sos) x E
  LstmParams cell;
  Matrix w_out;  // hidden x (labels + eos)
  Matrix b_out;

  template <typename Fn>
  void for_each_param(Fn&& fn);
  template <typename Fn>
  void for_each_param(Fn&& fn) const;
};

struct LmState {
  Matrix hidden;
  Matrix cell;
};

// Encoder + CTC head + attention decoder sharing the encoder.
struct HybridModel {
  Alphabet alphabet;
  EncoderParams encoder;
  Matrix ctc_w;  // enc x (labels + blank)
  Matrix ctc_b;
  DecoderParams decoder;

  template <typename Fn>
  void for_each_param(Fn&& fn);
  template <typename Fn>
  void for_each_param(Fn&& fn) const;
};

// --- construction ---------------------------------------------------------

// Weights uniform(-0.1, 0.1), biases zero except forget gates at +1.
LstmParams make_lstm(std::size_t input_dim, std::size_t hidden, Rng& rng);
BlstmStack make_blstm(std::size_t input_dim, std::size_t hidden, std::size_t layers, Rng& rng);
EncoderParams make_encoder(const EncoderConfig& config, Rng& rng);
DecoderParams make_decoder(const DecoderConfig& config, std::size_t encoder_dim,
                           const Alphabet& alphabet, Rng& rng);
HybridModel make_hybrid_model(const Alphabet& alphabet, const EncoderConfig& encoder,
                              const DecoderConfig& decoder, std::uint64_t seed);
LmParams make_lm(const Alphabet& alphabet, const LmConfig& config, std::uint64_t seed);

// --- inference ------------------------------------------------------------

EncoderStates blstm_encode(const FeatureSequence& x, const EncoderParams& p);
EncoderStates early_fusion_encode(const FeatureSequence& audio, const FeatureSequence& visual,
                                  const EncoderParams& p);
// Dispatches on the topology; `streams` holds one sequence, or audio then
// visual for early fusion.
EncoderStates encode(std::span<const FeatureSequence> streams, const EncoderParams& p);

LogProbLattice ctc_lattice(const EncoderStates& h, const HybridModel& model);

// Key projections of the encoder states, computed once per utterance.
struct AttentionMemory {
  Matrix states;  // T x enc
  Matrix keys;    // T x A
};
AttentionMemory make_attention_memory(const EncoderStates& h, const DecoderParams& d);

// Uniform initial alignment and zero decoder state.
AttentionState initial_attention_state(std::size_t num_frames, const DecoderParams& d);

struct AttentionResult {
  Matrix context;  // 1 x enc
  AttentionState state;
};
AttentionResult attention_step(const AttentionState& s, const AttentionMemory& memory,
                               const DecoderParams& d);
AttentionResult attention_step(const AttentionState& s, const EncoderStates& h,
                               const DecoderParams& d);

struct DecoderOutput {
  AttentionState state;
  std::vector<LogProb> log_probs;  // over output slots (labels, then eos)
};
DecoderOutput decoder_step(const AttentionState& s, int prev_label, const Matrix& context,
                           const DecoderParams& d, const Alphabet& alphabet);

LmState lm_initial_state(const LmParams& p);
struct LmOutput {
  LmState state;
  std::vector<LogProb> log_probs;  // over output slots
};
LmOutput lm_step(const LmState& s, int label, const LmParams& p);

// log p_lm(labels + eos).
LogProb lm_sequence_log_prob(std::span<const int> labels, const LmParams& p);

// --- tape-level building blocks -------------------------------------------

namespace graph {

ad::Var lstm_layer(ad::Var x, const LstmParams& p, bool reverse);
ad::Var blstm(ad::Var x, const BlstmStack& stack);
ad::Var encoder(ad::Tape& tape, std::span<const FeatureSequence> streams, const EncoderParams& p);
ad::Var encoder(std::span<const ad::Var> streams, const EncoderParams& p);
ad::Var ctc_logits(ad::Var h, const HybridModel& model);

struct Memory {
  ad::Var states;
  ad::Var keys;
};
Memory attention_memory(ad::Var h, const DecoderParams& d);

struct Attended {
  ad::Var context;
  ad::Var alignment;
};
Attended attend(const Memory& memory, ad::Var dec_hidden, ad::Var prev_alignment,
                const DecoderParams& d);

struct Step {
  ad::Var hidden;
  ad::Var cell;
  ad::Var log_probs;
};
Step decoder_cell(ad::Var context, std::size_t embed_slot, ad::Var hidden, ad::Var cell,
                  const DecoderParams& d);
Step lm_cell(std::size_t embed_slot, ad::Var hidden, ad::Var cell, const LmParams& p);

// Teacher-forced attention NLL over labels + eos with targets smoothed by
// `smoothing` (uniform over the output slots).
ad::Var attention_nll(const Memory& memory, std::span<const int> labels, double smoothing,
                      const HybridModel& model);

// Teacher-forced LM NLL over labels + eos.
ad::Var lm_nll(ad::Tape& tape, std::span<const int> labels, const LmParams& p);

}  // namespace graph

// --- parameter plumbing ---------------------------------------------------

template <typename Fn>
void visit_lstm(const std::string& prefix, LstmParams& p, Fn&& fn) {
  fn(prefix + ".w_in", p.w_in);
  fn(prefix + ".w_rec", p.w_rec);
  fn(prefix + ".bias", p.bias);
}
template <typename Fn>
void visit_lstm(const std::string& prefix, const LstmParams& p, Fn&& fn) {
  fn(prefix + ".w_in", p.w_in);
  fn(prefix + ".w_rec", p.w_rec);
  fn(prefix + ".bias", p.bias);
}

template <typename Stack, typename Fn>
void visit_blstm(const std::string& prefix, Stack& stack, Fn&& fn) {
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    visit_lstm(prefix + "." + std::to_string(i) + ".fwd", stack.layers[i].forward, fn);
    visit_lstm(prefix + "." + std::to_string(i) + ".bwd", stack.layers[i].backward, fn);
  }
}

template <typename Model, typename Fn>
void visit_hybrid(Model& m, Fn&& fn) {
  if (m.encoder.config.topology == EncoderTopology::early_fusion) {
    visit_blstm("enc.audio", m.encoder.audio_branch, fn);
    visit_blstm("enc.visual", m.encoder.visual_branch, fn);
  }
  visit_blstm("enc.trunk", m.encoder.trunk, fn);
  fn(std::string("ctc.w"), m.ctc_w);
  fn(std::string("ctc.b"), m.ctc_b);
  fn(std::string("dec.embedding"), m.decoder.embedding);
  visit_lstm("dec.cell", m.decoder.cell, fn);
  fn(std::string("dec.att.w_query"), m.decoder.attention.w_query);
  fn(std::string("dec.att.w_key"), m.decoder.attention.w_key);
  fn(std::string("dec.att.w_location"), m.decoder.attention.w_location);
  fn(std::string("dec.att.bias"), m.decoder.attention.bias);
  fn(std::string("dec.att.w_score"), m.decoder.attention.w_score);
  fn(std::string("dec.att.conv"), m.decoder.attention.conv);
  fn(std::string("dec.w_out"), m.decoder.w_out);
  fn(std::string("dec.b_out"), m.decoder.b_out);
}

template <typename Model, typename Fn>
void visit_lm(Model& m, Fn&& fn) {
  fn(std::string("lm.embedding"), m.embedding);
  visit_lstm("lm.cell", m.cell, fn);
  fn(std::string("lm.w_out"), m.w_out);
  fn(std::string("lm.b_out"), m.b_out);
}

template <typename Fn>
void HybridModel::for_each_param(Fn&& fn) { visit_hybrid(*this, fn); }
template <typename Fn>
void HybridModel::for_each_param(Fn&& fn) const { visit_hybrid(*this, fn); }
template <typename Fn>
void LmParams::for_each_param(Fn&& fn) { visit_lm(*this, fn); }
template <typename Fn>
void LmParams::for_each_param(Fn&& fn) const { visit_lm(*this, fn); }

std::size_t count_parameters(const HybridModel& m);

}  // namespace avsr
