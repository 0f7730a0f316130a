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

#include "avsr/models.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "avsr/error.hpp"

namespace avsr {
namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-0.1, 0.1);
  return m;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

LstmParams make_lstm(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.w_in = uniform_matrix(input_dim, 4 * hidden, rng);
  p.w_rec = uniform_matrix(hidden, 4 * hidden, rng);
  p.bias = Matrix(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) p.bias(0, j) = 1.0;
  return p;
}

BlstmStack make_blstm(std::size_t input_dim, std::size_t hidden, std::size_t layers, Rng& rng) {
  require(layers > 0 && hidden > 0 && input_dim > 0, "BLSTM needs positive sizes");
  BlstmStack s;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t in = i == 0 ? input_dim : 2 * hidden;
    BlstmLayer layer;
    layer.forward = make_lstm(in, hidden, rng);
    layer.backward = make_lstm(in, hidden, rng);
    s.layers.push_back(std::move(layer));
  }
  return s;
}

EncoderParams make_encoder(const EncoderConfig& config, Rng& rng) {
  EncoderParams p;
  p.config = config;
  if (config.topology == EncoderTopology::early_fusion) {
    p.audio_branch = make_blstm(config.input_dim, config.hidden, config.layers, rng);
    p.visual_branch = make_blstm(config.visual_dim, config.hidden, config.layers, rng);
    p.trunk = make_blstm(4 * config.hidden, config.hidden, config.layers, rng);
  } else {
    p.trunk = make_blstm(config.input_dim, config.hidden, config.layers, rng);
  }
  return p;
}

DecoderParams make_decoder(const DecoderConfig& config, std::size_t encoder_dim,
                           const Alphabet& alphabet, Rng& rng) {
  require(config.conv_width % 2 == 1, "location kernel width must be odd");
  DecoderParams d;
  d.config = config;
  d.embedding = uniform_matrix(alphabet.embed_size(), config.embed_dim, rng);
  d.cell = make_lstm(config.embed_dim + encoder_dim, config.hidden, rng);
  d.attention.w_query = uniform_matrix(config.hidden, config.attention_dim, rng);
  d.attention.w_key = uniform_matrix(encoder_dim, config.attention_dim, rng);
  d.attention.w_location = uniform_matrix(config.conv_channels, config.attention_dim, rng);
  d.attention.bias = Matrix(1, config.attention_dim);
  d.attention.w_score = uniform_matrix(config.attention_dim, 1, rng);
  d.attention.conv = uniform_matrix(config.conv_channels, config.conv_width, rng);
  d.w_out = uniform_matrix(config.hidden + encoder_dim, alphabet.output_size(), rng);
  d.b_out = Matrix(1, alphabet.output_size());
  return d;
}

HybridModel make_hybrid_model(const Alphabet& alphabet, const EncoderConfig& encoder,
                              const DecoderConfig& decoder, std::uint64_t seed) {
  Rng rng(seed);
  HybridModel m;
  m.alphabet = alphabet;
  m.encoder = make_encoder(encoder, rng);
  const std::size_t enc = m.encoder.output_dim();
  m.ctc_w = uniform_matrix(enc, alphabet.num_labels() + 1, rng);
  m.ctc_b = Matrix(1, alphabet.num_labels() + 1);
  m.decoder = make_decoder(decoder, enc, alphabet, rng);
  return m;
}

LmParams make_lm(const Alphabet& alphabet, const LmConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  LmParams p;
  p.config = config;
  p.alphabet = alphabet;
  p.embedding = uniform_matrix(alphabet.embed_size(), config.embed_dim, rng);
  p.cell = make_lstm(config.embed_dim, config.hidden, rng);
  p.w_out = uniform_matrix(config.hidden, alphabet.output_size(), rng);
  p.b_out = Matrix(1, alphabet.output_size());
  return p;
}

std::size_t count_parameters(const HybridModel& m) {
  std::size_t n = 0;
  m.for_each_param([&n](const std::string&, const Matrix& w) { n += w.size(); });
  return n;
}

// --- graph ----------------------------------------------------------------

namespace graph {

ad::Var lstm_layer(ad::Var x, const LstmParams& p, bool reverse) {
  require(x.cols() == p.input_dim(), "LSTM input width " + std::to_string(x.cols()) +
                                         " does not match parameters (" +
                                         std::to_string(p.input_dim()) + ")");
  ad::Tape& t = *x.tape;
  ad::Var pre = ad::add_row(ad::matmul(x, t.param(p.w_in)), t.param(p.bias));
  return ad::lstm_recurrence(pre, t.param(p.w_rec), reverse);
}

ad::Var blstm(ad::Var x, const BlstmStack& stack) {
  for (const BlstmLayer& layer : stack.layers) {
    ad::Var f = lstm_layer(x, layer.forward, false);
    ad::Var b = lstm_layer(x, layer.backward, true);
    x = ad::concat_cols(f, b);
  }
  return x;
}

ad::Var encoder(std::span<const ad::Var> streams, const EncoderParams& p) {
  if (p.config.topology == EncoderTopology::early_fusion) {
    require(streams.size() == 2, "early fusion needs audio and visual streams");
    require(streams[0].rows() == streams[1].rows(),
            "early fusion streams differ in length (" + std::to_string(streams[0].rows()) +
                " vs " + std::to_string(streams[1].rows()) + " frames)");
    ad::Var a = blstm(streams[0], p.audio_branch);
    ad::Var v = blstm(streams[1], p.visual_branch);
    return blstm(ad::concat_cols(a, v), p.trunk);
  }
  require(streams.size() == 1, "single-stream encoder takes exactly one stream");
  return blstm(streams[0], p.trunk);
}

ad::Var encoder(ad::Tape& tape, std::span<const FeatureSequence> streams, const EncoderParams& p) {
  if (streams.size() == 2) {
    require(streams[0].fps == streams[1].fps, "early fusion streams differ in frame rate");
  }
  std::vector<ad::Var> vars;
  for (const FeatureSequence& s : streams) {
    require(s.num_frames() > 0, "empty feature sequence");
    vars.push_back(tape.external(s.frames));
  }
  return encoder(std::span<const ad::Var>(vars), p);
}

ad::Var ctc_logits(ad::Var h, const HybridModel& model) {
  ad::Tape& t = *h.tape;
  return ad::add_row(ad::matmul(h, t.param(model.ctc_w)), t.param(model.ctc_b));
}

Memory attention_memory(ad::Var h, const DecoderParams& d) {
  require(h.cols() == d.attention.w_key.rows(), "encoder width does not match decoder");
  return {h, ad::matmul(h, h.tape->param(d.attention.w_key))};
}

Attended attend(const Memory& memory, ad::Var dec_hidden, ad::Var prev_alignment,
                const DecoderParams& d) {
  ad::Tape& t = *memory.states.tape;
  const AttentionParams& a = d.attention;
  require(prev_alignment.cols() == memory.states.rows(),
          "alignment length does not match encoder frames");
  ad::Var loc = ad::matmul(ad::conv_location(prev_alignment, t.param(a.conv)),
                           t.param(a.w_location));
  ad::Var query = ad::add(ad::matmul(dec_hidden, t.param(a.w_query)), t.param(a.bias));
  ad::Var energy = ad::tanh(ad::add_row(ad::add(memory.keys, loc), query));
  ad::Var scores = ad::transpose(ad::matmul(energy, t.param(a.w_score)));
  ad::Var alignment = ad::softmax_rows(scores);
  return {ad::matmul(alignment, memory.states), alignment};
}

namespace {

Step recurrent_output(ad::Var input, ad::Var hidden, ad::Var cell, const LstmParams& p,
                      ad::Var readout_extra, bool has_extra, const Matrix& w_out,
                      const Matrix& b_out) {
  ad::Tape& t = *input.tape;
  ad::Var pre = ad::add(ad::add(ad::matmul(input, t.param(p.w_in)), t.param(p.bias)),
                        ad::matmul(hidden, t.param(p.w_rec)));
  ad::Var hc = ad::lstm_cell(pre, cell);
  const std::size_t h = p.hidden();
  ad::Var h_new = ad::slice_cols(hc, 0, h);
  ad::Var c_new = ad::slice_cols(hc, h, h);
  ad::Var feat = has_extra ? ad::concat_cols(h_new, readout_extra) : h_new;
  ad::Var logits = ad::add(ad::matmul(feat, t.param(w_out)), t.param(b_out));
  return {h_new, c_new, ad::log_softmax_rows(logits)};
}

}  // namespace

Step decoder_cell(ad::Var context, std::size_t embed_slot, ad::Var hidden, ad::Var cell,
                  const DecoderParams& d) {
  ad::Tape& t = *context.tape;
  ad::Var emb = ad::row(t.param(d.embedding), embed_slot);
  return recurrent_output(ad::concat_cols(emb, context), hidden, cell, d.cell, context, true,
                          d.w_out, d.b_out);
}

Step lm_cell(std::size_t embed_slot, ad::Var hidden, ad::Var cell, const LmParams& p) {
  ad::Tape& t = *hidden.tape;
  ad::Var emb = ad::row(t.param(p.embedding), embed_slot);
  return recurrent_output(emb, hidden, cell, p.cell, emb, false, p.w_out, p.b_out);
}

namespace {

// Per-step weights w with sum(w * log_probs) = -(smoothed target . log_probs).
Matrix smoothed_nll_weights(std::size_t slots, std::size_t target, double smoothing) {
  Matrix w(1, slots, -smoothing / static_cast<double>(slots));
  w(0, target) -= 1.0 - smoothing;
  return w;
}

}  // namespace

ad::Var attention_nll(const Memory& memory, std::span<const int> labels, double smoothing,
                      const HybridModel& model) {
  ad::Tape& t = *memory.states.tape;
  const DecoderParams& d = model.decoder;
  const Alphabet& alpha = model.alphabet;
  const std::size_t T = memory.states.rows();
  const std::size_t slots = alpha.output_size();
  ad::Var hidden = t.constant(Matrix(1, d.config.hidden));
  ad::Var cell = t.constant(Matrix(1, d.config.hidden));
  ad::Var alignment = t.constant(Matrix(1, T, 1.0 / static_cast<double>(T)));
  std::vector<ad::Var> terms;
  terms.reserve(labels.size() + 1);
  int prev = alpha.sos_id();
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const int target = i < labels.size() ? labels[i] : alpha.eos_id();
    require(i == labels.size() ? true : alpha.is_label(target), "target holds a non-label id");
    Attended att = attend(memory, hidden, alignment, d);
    Step step = decoder_cell(att.context, alpha.embed_slot(prev), hidden, cell, d);
    terms.push_back(ad::weighted_sum(
        step.log_probs, smoothed_nll_weights(slots, alpha.output_slot(target), smoothing)));
    hidden = step.hidden;
    cell = step.cell;
    alignment = att.alignment;
    prev = target;
  }
  return ad::add_scalars(terms);
}

ad::Var lm_nll(ad::Tape& t, std::span<const int> labels, const LmParams& p) {
  const Alphabet& alpha = p.alphabet;
  const std::size_t slots = alpha.output_size();
  ad::Var hidden = t.constant(Matrix(1, p.config.hidden));
  ad::Var cell = t.constant(Matrix(1, p.config.hidden));
  std::vector<ad::Var> terms;
  int prev = alpha.sos_id();
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const int target = i < labels.size() ? labels[i] : alpha.eos_id();
    require(i == labels.size() ? true : alpha.is_label(target), "target holds a non-label id");
    Step step = lm_cell(alpha.embed_slot(prev), hidden, cell, p);
    terms.push_back(
        ad::weighted_sum(step.log_probs, smoothed_nll_weights(slots, alpha.output_slot(target), 0.0)));
    hidden = step.hidden;
    cell = step.cell;
    prev = target;
  }
  return ad::add_scalars(terms);
}

}  // namespace graph

// --- inference ------------------------------------------------------------

EncoderStates encode(std::span<const FeatureSequence> streams, const EncoderParams& p) {
  require(!streams.empty(), "no input streams");
  ad::Tape tape(false);
  ad::Var h = graph::encoder(tape, streams, p);
  return {h.value(), streams.front().fps};
}

EncoderStates blstm_encode(const FeatureSequence& x, const EncoderParams& p) {
  require(p.config.topology == EncoderTopology::single_stream,
          "blstm_encode needs a single-stream encoder");
  return encode(std::span<const FeatureSequence>(&x, 1), p);
}

EncoderStates early_fusion_encode(const FeatureSequence& audio, const FeatureSequence& visual,
                                  const EncoderParams& p) {
  require(p.config.topology == EncoderTopology::early_fusion,
          "early_fusion_encode needs an early-fusion encoder");
  const FeatureSequence streams[2] = {audio, visual};
  return encode(streams, p);
}

LogProbLattice ctc_lattice(const EncoderStates& h, const HybridModel& model) {
  require(h.num_frames() > 0, "empty encoder output");
  ad::Tape tape(false);
  ad::Var logits = graph::ctc_logits(tape.external(h.states), model);
  return LogProbLattice::from_logits(logits.value(), h.fps);
}

AttentionMemory make_attention_memory(const EncoderStates& h, const DecoderParams& d) {
  ad::Tape tape(false);
  graph::Memory m = graph::attention_memory(tape.external(h.states), d);
  return {h.states, m.keys.value()};
}

AttentionState initial_attention_state(std::size_t num_frames, const DecoderParams& d) {
  require(num_frames > 0, "empty encoder output");
  return {Matrix(1, num_frames, 1.0 / static_cast<double>(num_frames)),
          Matrix(1, d.config.hidden), Matrix(1, d.config.hidden)};
}

AttentionResult attention_step(const AttentionState& s, const AttentionMemory& memory,
                               const DecoderParams& d) {
  ad::Tape tape(false);
  graph::Memory m{tape.external(memory.states), tape.external(memory.keys)};
  graph::Attended a = graph::attend(m, tape.external(s.hidden), tape.external(s.alignment), d);
  return {a.context.value(), {a.alignment.value(), s.hidden, s.cell}};
}

AttentionResult attention_step(const AttentionState& s, const EncoderStates& h,
                               const DecoderParams& d) {
  return attention_step(s, make_attention_memory(h, d), d);
}

DecoderOutput decoder_step(const AttentionState& s, int prev_label, const Matrix& context,
                           const DecoderParams& d, const Alphabet& alphabet) {
  const std::size_t slot = alphabet.embed_slot(prev_label);
  require(context.rows() == 1 && d.cell.input_dim() == d.config.embed_dim + context.cols(),
          "context width does not match decoder");
  ad::Tape tape(false);
  graph::Step step = graph::decoder_cell(tape.external(context), slot, tape.external(s.hidden),
                                         tape.external(s.cell), d);
  const auto lp = step.log_probs.value().values();
  return {{s.alignment, step.hidden.value(), step.cell.value()},
          std::vector<LogProb>(lp.begin(), lp.end())};
}

LmState lm_initial_state(const LmParams& p) {
  return {Matrix(1, p.config.hidden), Matrix(1, p.config.hidden)};
}

LmOutput lm_step(const LmState& s, int label, const LmParams& p) {
  const std::size_t slot = p.alphabet.embed_slot(label);
  ad::Tape tape(false);
  graph::Step step = graph::lm_cell(slot, tape.external(s.hidden), tape.external(s.cell), p);
  const auto lp = step.log_probs.value().values();
  return {{step.hidden.value(), step.cell.value()}, std::vector<LogProb>(lp.begin(), lp.end())};
}

LogProb lm_sequence_log_prob(std::span<const int> labels, const LmParams& p) {
  ad::Tape tape(false);
  return -graph::lm_nll(tape, labels, p).scalar();
}

}  // namespace avsr
