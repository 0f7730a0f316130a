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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "avsr/error.hpp"
#include "avsr/models.hpp"
#include "oracles.hpp"

using namespace avsr;

namespace {

const Alphabet kAlpha("abc");

EncoderConfig tiny_encoder(EncoderTopology topology = EncoderTopology::single_stream,
                           std::size_t layers = 2) {
  EncoderConfig c;
  c.topology = topology;
  c.input_dim = 4;
  c.visual_dim = 3;
  c.hidden = 3;
  c.layers = layers;
  return c;
}

DecoderConfig tiny_decoder() {
  DecoderConfig c;
  c.embed_dim = 3;
  c.hidden = 4;
  c.attention_dim = 3;
  c.conv_channels = 2;
  c.conv_width = 3;
  return c;
}

FeatureSequence random_sequence(std::size_t T, std::size_t D, Rng& rng, double fps = 50.0) {
  FeatureSequence s;
  s.fps = fps;
  s.frames = Matrix(T, D);
  for (double& v : s.frames.values()) v = rng.normal();
  return s;
}

// Larger weights than the default init so the gradient check exercises
// saturating nonlinearities too.
void randomize(HybridModel& m, std::uint64_t seed) {
  Rng rng(seed);
  m.for_each_param([&](const std::string&, Matrix& w) {
    for (double& v : w.values()) v = rng.normal(0.0, 0.5);
  });
}

double prob_mass(std::span<const LogProb> lp) {
  double s = 0.0;
  for (LogProb v : lp) s += std::exp(v);
  return s;
}

// Teacher-forced CTC + attention loss; compares tape gradients of every
// model parameter against central differences.
void check_model_gradients(HybridModel& m, const std::vector<FeatureSequence>& streams,
                           const std::vector<int>& labels, double smoothing) {
  auto loss_on = [&](ad::Tape& t) {
    ad::Var h = graph::encoder(t, streams, m.encoder);
    ad::Var ctc = ad::ctc_nll(graph::ctc_logits(h, m), labels);
    ad::Var att = graph::attention_nll(graph::attention_memory(h, m.decoder), labels, smoothing, m);
    return ad::add(ad::scale(ctc, 0.3), ad::scale(att, 0.7));
  };
  ad::Tape tape;
  ad::Var loss = loss_on(tape);
  tape.backward(loss);
  m.for_each_param([&](const std::string& name, Matrix& w) {
    const Matrix g = tape.grad(tape.param(w));
    auto f = [&](std::span<const double> x) {
      const Matrix saved = w;
      std::copy(x.begin(), x.end(), w.values().begin());
      ad::Tape t(false);
      const double v = loss_on(t).scalar();
      w = saved;
      return v;
    };
    const std::vector<double> x(w.values().begin(), w.values().end());
    const auto fd = fd_gradient(f, x);
    const std::vector<double> an(g.values().begin(), g.values().end());
    INFO(name);
    CHECK(oracle::rel_err(an, fd) < 1e-4);
  });
}

Matrix reverse_rows(const Matrix& m) {
  Matrix r(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    for (std::size_t c = 0; c < m.cols(); ++c) r(t, c) = m(m.rows() - 1 - t, c);
  }
  return r;
}

Matrix swap_row_halves(const Matrix& m) {
  const std::size_t h = m.rows() / 2;
  Matrix r(m.rows(), m.cols());
  for (std::size_t t = 0; t < h; ++t) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      r(t, c) = m(t + h, c);
      r(t + h, c) = m(t, c);
    }
  }
  return r;
}

Matrix swap_halves(const Matrix& m) {
  const std::size_t h = m.cols() / 2;
  Matrix r(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    for (std::size_t c = 0; c < h; ++c) {
      r(t, c) = m(t, c + h);
      r(t, c + h) = m(t, c);
    }
  }
  return r;
}

}  // namespace

TEST_CASE("initialization ranges and forget bias") {
  const HybridModel m = make_hybrid_model(Alphabet(std::string(kDefaultAlphabet)), EncoderConfig{},
                                          DecoderConfig{}, 3);
  m.for_each_param([](const std::string& name, const Matrix& w) {
    INFO(name);
    const bool is_bias = name.ends_with(".bias");
    for (std::size_t c = 0; c < w.cols(); ++c) {
      for (std::size_t r = 0; r < w.rows(); ++r) {
        if (is_bias) {
          const std::size_t h = w.cols() / 4;
          const bool forget = name.find("att") == std::string::npos && c >= h && c < 2 * h;
          CHECK(w(r, c) == (forget ? 1.0 : 0.0));
        } else if (name.ends_with("b_out") || name == "ctc.b") {
          CHECK(w(r, c) == 0.0);
        } else {
          CHECK(std::abs(w(r, c)) <= 0.1);
        }
      }
    }
  });
  // Default topology: 2 layers of 32 per direction over 80-dim input.
  CHECK(m.encoder.output_dim() == 64);
  CHECK(m.ctc_w.cols() == 12);
  CHECK(m.decoder.w_out.cols() == 12);
  CHECK(m.decoder.embedding.rows() == 12);
  std::size_t n = 0;
  m.for_each_param([&n](const std::string&, const Matrix& w) { n += w.size(); });
  CHECK(count_parameters(m) == n);
}

TEST_CASE("construction is deterministic in the seed") {
  const HybridModel a = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 5);
  const HybridModel b = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 5);
  const HybridModel c = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 6);
  CHECK(a.ctc_w == b.ctc_w);
  CHECK(a.decoder.w_out == b.decoder.w_out);
  CHECK(a.ctc_w != c.ctc_w);
}

TEST_CASE("output distributions are normalized") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 1);
  randomize(m, 2);
  Rng rng(3);
  const FeatureSequence x = random_sequence(9, 4, rng);
  const EncoderStates h = blstm_encode(x, m.encoder);
  CHECK(h.num_frames() == 9);
  CHECK(h.states.cols() == 6);
  const LogProbLattice lattice = ctc_lattice(h, m);
  CHECK(lattice.width() == 4);
  CHECK_NOTHROW(lattice.validate(1e-12));

  const AttentionMemory memory = make_attention_memory(h, m.decoder);
  AttentionState s = initial_attention_state(9, m.decoder);
  int prev = kAlpha.sos_id();
  for (int label : {0, 2, 1, 1}) {
    const AttentionResult att = attention_step(s, memory, m.decoder);
    double mass = 0.0;
    for (double a : att.state.alignment.values()) mass += a;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    const DecoderOutput out = decoder_step(att.state, prev, att.context, m.decoder, kAlpha);
    CHECK(out.log_probs.size() == 4);
    CHECK(prob_mass(out.log_probs) == doctest::Approx(1.0).epsilon(1e-12));
    s = out.state;
    prev = label;
  }

  LmParams lm = make_lm(kAlpha, LmConfig{4, 5}, 7);
  LmState ls = lm_initial_state(lm);
  prev = kAlpha.sos_id();
  for (int label : {1, 0, 2}) {
    const LmOutput out = lm_step(ls, prev, lm);
    CHECK(prob_mass(out.log_probs) == doctest::Approx(1.0).epsilon(1e-12));
    ls = out.state;
    prev = label;
  }
}

TEST_CASE("zeroed output layers give a uniform distribution") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 1);
  m.decoder.w_out.fill(0.0);
  m.decoder.b_out.fill(0.0);
  Rng rng(4);
  const EncoderStates h = blstm_encode(random_sequence(5, 4, rng), m.encoder);
  const AttentionResult att = attention_step(initial_attention_state(5, m.decoder), h, m.decoder);
  const DecoderOutput out = decoder_step(att.state, kAlpha.sos_id(), att.context, m.decoder, kAlpha);
  for (LogProb lp : out.log_probs) CHECK(lp == doctest::Approx(std::log(1.0 / 4.0)).epsilon(1e-14));
}

TEST_CASE("zero scoring vector gives uniform attention and the mean context") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 1);
  randomize(m, 8);
  m.decoder.attention.w_score.fill(0.0);
  Rng rng(5);
  const EncoderStates h = blstm_encode(random_sequence(7, 4, rng), m.encoder);
  AttentionState s = initial_attention_state(7, m.decoder);
  s.hidden(0, 1) = 0.7;
  const AttentionResult att = attention_step(s, h, m.decoder);
  for (double a : att.state.alignment.values()) CHECK(a == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
  for (std::size_t c = 0; c < h.states.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 7; ++t) mean += h.states(t, c) / 7.0;
    CHECK(att.context(0, c) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("with shared weights a single frame reads the same both ways") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(EncoderTopology::single_stream, 1),
                                    tiny_decoder(), 2);
  randomize(m, 3);
  BlstmLayer& layer = m.encoder.trunk.layers[0];
  layer.backward = layer.forward;
  Rng rng(6);
  const EncoderStates h = blstm_encode(random_sequence(1, 4, rng), m.encoder);
  for (std::size_t c = 0; c < 3; ++c) CHECK(h.states(0, c) == h.states(0, c + 3));
}

TEST_CASE("time reversal swaps the directions") {
  for (std::size_t layers : {1, 2}) {
    HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(EncoderTopology::single_stream, layers),
                                      tiny_decoder(), 2);
    randomize(m, 4);
    for (std::size_t i = 0; i < layers; ++i) {
      BlstmLayer& layer = m.encoder.trunk.layers[i];
      layer.backward = layer.forward;
      // Above the first layer the input halves arrive swapped under reversal.
      if (i > 0) layer.backward.w_in = swap_row_halves(layer.forward.w_in);
    }
    Rng rng(7);
    const FeatureSequence x = random_sequence(8, 4, rng);
    FeatureSequence xr = x;
    xr.frames = reverse_rows(x.frames);
    const Matrix h = blstm_encode(x, m.encoder).states;
    const Matrix hr = blstm_encode(xr, m.encoder).states;
    const Matrix expect = swap_halves(reverse_rows(h));
    INFO("layers " << layers);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(hr.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("inference wrappers agree with the teacher-forced losses") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 9);
  randomize(m, 10);
  Rng rng(11);
  const FeatureSequence x = random_sequence(10, 4, rng);
  const std::vector<int> y = {2, 0, 0, 1};
  const EncoderStates h = blstm_encode(x, m.encoder);
  const AttentionMemory memory = make_attention_memory(h, m.decoder);
  AttentionState s = initial_attention_state(10, m.decoder);
  double log_p = 0.0;
  int prev = kAlpha.sos_id();
  for (std::size_t i = 0; i <= y.size(); ++i) {
    const int target = i < y.size() ? y[i] : kAlpha.eos_id();
    const AttentionResult att = attention_step(s, memory, m.decoder);
    const DecoderOutput out = decoder_step(att.state, prev, att.context, m.decoder, kAlpha);
    log_p += out.log_probs[kAlpha.output_slot(target)];
    s = out.state;
    prev = target;
  }
  ad::Tape t(false);
  ad::Var henc = graph::encoder(t, std::span<const FeatureSequence>(&x, 1), m.encoder);
  const double nll = graph::attention_nll(graph::attention_memory(henc, m.decoder), y, 0.0, m).scalar();
  CHECK(nll == doctest::Approx(-log_p).epsilon(1e-12));

  LmParams lm = make_lm(kAlpha, LmConfig{4, 5}, 12);
  LmState ls = lm_initial_state(lm);
  double lm_lp = 0.0;
  prev = kAlpha.sos_id();
  for (std::size_t i = 0; i <= y.size(); ++i) {
    const int target = i < y.size() ? y[i] : kAlpha.eos_id();
    const LmOutput out = lm_step(ls, prev, lm);
    lm_lp += out.log_probs[kAlpha.output_slot(target)];
    ls = out.state;
    prev = target;
  }
  CHECK(lm_sequence_log_prob(y, lm) == doctest::Approx(lm_lp).epsilon(1e-12));
}

TEST_CASE("smoothed attention loss interpolates between hard and uniform targets") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 13);
  randomize(m, 14);
  Rng rng(15);
  const FeatureSequence x = random_sequence(6, 4, rng);
  const std::vector<int> y = {1, 2};
  auto nll = [&](double eps) {
    ad::Tape t(false);
    ad::Var h = graph::encoder(t, std::span<const FeatureSequence>(&x, 1), m.encoder);
    return graph::attention_nll(graph::attention_memory(h, m.decoder), y, eps, m).scalar();
  };
  const double hard = nll(0.0), uniform = nll(1.0);
  CHECK(nll(0.1) == doctest::Approx(0.9 * hard + 0.1 * uniform).epsilon(1e-12));
}

TEST_CASE("single-stream gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), seed);
    randomize(m, seed + 100);
    Rng rng(seed);
    const std::vector<FeatureSequence> streams = {random_sequence(6, 4, rng)};
    check_model_gradients(m, streams, {0, 1, 1}, 0.1);
  }
}

TEST_CASE("early-fusion gradients match finite differences") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(EncoderTopology::early_fusion, 1),
                                    tiny_decoder(), 4);
  randomize(m, 5);
  Rng rng(6);
  const std::vector<FeatureSequence> streams = {random_sequence(5, 4, rng),
                                                random_sequence(5, 3, rng)};
  check_model_gradients(m, streams, {2, 0}, 0.0);
}

TEST_CASE("early fusion ignores a silenced visual branch") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(EncoderTopology::early_fusion),
                                    tiny_decoder(), 4);
  randomize(m, 6);
  m.for_each_param([](const std::string& name, Matrix& w) {
    if (name.starts_with("enc.visual")) w.fill(0.0);
  });
  Rng rng(7);
  const FeatureSequence a = random_sequence(6, 4, rng);
  const FeatureSequence v1 = random_sequence(6, 3, rng);
  const FeatureSequence v2 = random_sequence(6, 3, rng);
  CHECK(early_fusion_encode(a, v1, m.encoder).states == early_fusion_encode(a, v2, m.encoder).states);
  const FeatureSequence a2 = random_sequence(6, 4, rng);
  CHECK(early_fusion_encode(a, v1, m.encoder).states != early_fusion_encode(a2, v1, m.encoder).states);
}

TEST_CASE("misuse is reported") {
  HybridModel m = make_hybrid_model(kAlpha, tiny_encoder(EncoderTopology::early_fusion),
                                    tiny_decoder(), 4);
  Rng rng(8);
  const FeatureSequence a = random_sequence(6, 4, rng);
  CHECK_THROWS_AS(early_fusion_encode(a, random_sequence(5, 3, rng), m.encoder), UsageError);
  CHECK_THROWS_AS(early_fusion_encode(a, random_sequence(6, 3, rng, 25.0), m.encoder), UsageError);
  CHECK_THROWS_AS(blstm_encode(a, m.encoder), UsageError);

  HybridModel s = make_hybrid_model(kAlpha, tiny_encoder(), tiny_decoder(), 4);
  CHECK_THROWS_AS(blstm_encode(random_sequence(6, 5, rng), s.encoder), UsageError);
  const EncoderStates h = blstm_encode(a, s.encoder);
  const AttentionResult att = attention_step(initial_attention_state(6, s.decoder), h, s.decoder);
  CHECK_THROWS_AS(decoder_step(att.state, kAlpha.blank_id(), att.context, s.decoder, kAlpha),
                  UsageError);
  CHECK_THROWS_AS(lm_step(lm_initial_state(make_lm(kAlpha, {}, 1)), kAlpha.blank_id(),
                          make_lm(kAlpha, {}, 1)),
                  UsageError);
}
