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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "avsr/error.hpp"
#include "avsr/training.hpp"
#include "oracles.hpp"

using namespace avsr;

namespace {

const Alphabet kAlpha("abc");

HybridModel tiny_model(std::uint64_t seed, std::size_t input_dim = 4, std::size_t hidden = 4) {
  EncoderConfig e;
  e.input_dim = input_dim;
  e.hidden = hidden;
  e.layers = 1;
  DecoderConfig d;
  d.embed_dim = 3;
  d.hidden = 6;
  d.attention_dim = 4;
  d.conv_channels = 2;
  d.conv_width = 3;
  return make_hybrid_model(kAlpha, e, d, seed);
}

TrainingExample random_example(std::size_t T, std::vector<int> labels, Rng& rng) {
  FeatureSequence x;
  x.fps = 50.0;
  x.frames = Matrix(T, 4);
  for (double& v : x.frames.values()) v = rng.normal();
  return {{x}, std::move(labels)};
}

std::vector<TrainingExample> random_batch(std::uint64_t seed) {
  Rng rng(seed);
  return {random_example(7, {0, 1}, rng), random_example(9, {2, 2, 1}, rng),
          random_example(5, {1}, rng)};
}

}  // namespace

TEST_CASE("label smoothing") {
  const std::vector<double> onehot = {0, 0, 1, 0, 0};
  const auto s = label_smooth(onehot, 0.1);
  for (std::size_t i = 0; i < 5; ++i) CHECK(s[i] == doctest::Approx(i == 2 ? 0.92 : 0.02).epsilon(1e-15));
  CHECK(label_smooth(onehot, 0.0) == onehot);
  double mass = 0.0;
  for (double v : label_smooth(std::vector<double>{0.3, 0.7, 0.0}, 0.25)) mass += v;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(label_smooth(onehot, 1.0), UsageError);
  CHECK_THROWS_AS(label_smooth(onehot, -0.1), UsageError);
}

TEST_CASE("multi-task loss is linear in alpha") {
  const HybridModel m = tiny_model(1);
  const auto batch = random_batch(2);
  const LossResult l0 = multitask_loss(batch, m, 0.0, 0.1, false);
  const LossResult l1 = multitask_loss(batch, m, 1.0, 0.1, false);
  CHECK(l0.loss == doctest::Approx(l0.att).epsilon(1e-14));
  CHECK(l1.loss == doctest::Approx(l1.ctc).epsilon(1e-14));
  for (double a : {0.2, 0.5, 0.73}) {
    const LossResult la = multitask_loss(batch, m, a, 0.1, false);
    CHECK(la.loss == doctest::Approx(a * l1.loss + (1.0 - a) * l0.loss).epsilon(1e-12));
    CHECK(la.ctc == doctest::Approx(l1.ctc).epsilon(1e-14));
    CHECK(la.att == doctest::Approx(l0.att).epsilon(1e-14));
  }
  // Smoothing touches only the attention term.
  const LossResult s0 = multitask_loss(batch, m, 0.5, 0.0, false);
  const LossResult s3 = multitask_loss(batch, m, 0.5, 0.3, false);
  CHECK(s0.ctc == s3.ctc);
  CHECK(s0.att != s3.att);
}

TEST_CASE("the batch loss is the mean of per-utterance losses") {
  const HybridModel m = tiny_model(3);
  const auto batch = random_batch(4);
  double sum = 0.0;
  for (const TrainingExample& ex : batch) {
    sum += multitask_loss(std::span<const TrainingExample>(&ex, 1), m, 0.2, 0.1, false).loss;
  }
  CHECK(multitask_loss(batch, m, 0.2, 0.1, false).loss == doctest::Approx(sum / 3.0).epsilon(1e-12));
}

TEST_CASE("multi-task gradients match finite differences") {
  HybridModel m = tiny_model(5);
  Rng init(6);
  m.for_each_param([&](const std::string&, Matrix& w) {
    for (double& v : w.values()) v = init.normal(0.0, 0.5);
  });
  const auto batch = random_batch(7);
  const LossResult r = multitask_loss(batch, m, 0.3, 0.1, true);
  const auto params = parameter_list(m);
  REQUIRE(r.grads.size() == params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    auto f = [&](std::span<const double> x) {
      const Matrix saved = w;
      std::copy(x.begin(), x.end(), w.values().begin());
      const double v = multitask_loss(batch, m, 0.3, 0.1, false).loss;
      w = saved;
      return v;
    };
    const std::vector<double> x(w.values().begin(), w.values().end());
    const auto fd = fd_gradient(f, x);
    const std::vector<double> an(r.grads[p].values().begin(), r.grads[p].values().end());
    INFO("parameter " << p);
    CHECK(oracle::rel_err(an, fd) < 1e-4);
  }
}

TEST_CASE("utterances too short for their CTC target are skipped") {
  const HybridModel m = tiny_model(8);
  Rng rng(9);
  std::vector<TrainingExample> batch = {random_example(6, {0, 1}, rng),
                                        random_example(2, {1, 1}, rng)};  // needs 3 frames
  const LossResult r = multitask_loss(batch, m, 0.2, 0.1, false);
  CHECK(r.used == 1);
  CHECK(r.infeasible == 1);
  CHECK(r.loss == doctest::Approx(
                      multitask_loss(std::span<const TrainingExample>(batch.data(), 1), m, 0.2, 0.1,
                                     false)
                          .loss)
                      .epsilon(1e-14));
  CHECK_THROWS_AS(multitask_loss(std::span<const TrainingExample>(batch.data() + 1, 1), m, 0.2,
                                 0.1, false),
                  TrainingError);
}

TEST_CASE("augmentation levels are drawn uniformly") {
  const CorpusConfig cc;
  const SyntheticVoice voice(cc);
  const NoiseBank bank(voice, 1, 1.0);
  TrainConfig cfg;
  Waveform w;
  w.samples.assign(400, 0.0);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = std::sin(0.1 * static_cast<double>(i));
  Rng rng(10);
  std::map<double, int> counts;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    double snr = 0.0;
    const Waveform out = augment(w, cfg, bank, rng, &snr);
    ++counts[snr];
    if (snr == kCleanSnr) {
      CHECK(out.samples == w.samples);
    } else if (i < 50) {
      CHECK(std::abs(measured_snr_db(w, out) - snr) < 0.01);
    }
  }
  REQUIRE(counts.size() == 4);
  for (const auto& [snr, c] : counts) {
    INFO("snr " << snr);
    CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 0.02);
  }
}

TEST_CASE("a zero learning rate leaves the parameters unchanged") {
  for (OptimizerKind kind : {OptimizerKind::adadelta, OptimizerKind::sgd}) {
    HybridModel m = tiny_model(11);
    const HybridModel before = m;
    TrainConfig cfg;
    cfg.optimizer = kind;
    cfg.learning_rate = 0.0;
    Optimizer opt(cfg);
    const auto batch = random_batch(12);
    for (int i = 0; i < 3; ++i) {
      LossResult r = multitask_loss(batch, m, 0.2, 0.1, true);
      opt.step(parameter_list(m), r.grads);
    }
    CHECK(m.ctc_w == before.ctc_w);
    CHECK(m.decoder.w_out == before.decoder.w_out);
    CHECK(m.encoder.trunk.layers[0].forward.w_rec == before.encoder.trunk.layers[0].forward.w_rec);
  }
}

TEST_CASE("optimizer updates follow the textbook rules") {
  TrainConfig cfg;
  cfg.grad_clip = 0.0;
  Matrix theta(1, 2, 1.0);
  Matrix* params[1] = {&theta};
  {
    Optimizer opt(cfg);
    Gradients g = {Matrix(1, 2, std::vector<double>{2.0, 0.0})};
    opt.step(params, g);
    const double eg = 0.05 * 4.0;
    const double delta = -std::sqrt(1e-8) / std::sqrt(eg + 1e-8) * 2.0;
    CHECK(theta(0, 0) == doctest::Approx(1.0 + delta).epsilon(1e-15));
    CHECK(theta(0, 1) == 1.0);
    g = {Matrix(1, 2, std::vector<double>{-1.0, 0.0})};
    opt.step(params, g);
    const double ex = 0.05 * delta * delta;
    const double eg2 = 0.95 * eg + 0.05;
    const double delta2 = std::sqrt(ex + 1e-8) / std::sqrt(eg2 + 1e-8);
    CHECK(theta(0, 0) == doctest::Approx(1.0 + delta + delta2).epsilon(1e-15));
  }
  {
    cfg.optimizer = OptimizerKind::sgd;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.5;
    cfg.grad_clip = 5.0;
    theta = Matrix(1, 2, 0.0);
    Optimizer opt(cfg);
    Gradients g = {Matrix(1, 2, std::vector<double>{6.0, 8.0})};  // norm 10, clipped to 5
    CHECK(opt.step(params, g) == doctest::Approx(10.0));
    CHECK(theta(0, 0) == doctest::Approx(-0.3).epsilon(1e-15));
    CHECK(theta(0, 1) == doctest::Approx(-0.4).epsilon(1e-15));
    g = {Matrix(1, 2, std::vector<double>{1.0, 0.0})};
    opt.step(params, g);
    CHECK(theta(0, 0) == doctest::Approx(-0.3 - 0.1 * (0.5 * 3.0 + 1.0)).epsilon(1e-15));
  }
}

TEST_CASE("a single utterance can be memorized") {
  // Default architecture and optimizer on one clean synthetic utterance.
  // Smoothed targets put a floor under the attention loss, so memorization
  // is measured on hard targets.
  const CorpusConfig cc;
  const SyntheticVoice voice(cc);
  const auto utts = load_utterances(generate_corpus(voice, 1, 21, "one"), voice);
  const Frontend fe(cc.sample_rate);
  const std::vector<TrainingExample> batch = {
      {fe(SystemKind::audio, utts[0].signal.audio, utts[0].signal.visual), utts[0].labels}};
  HybridModel m = make_hybrid_model(cc.make_alphabet(), EncoderConfig{}, DecoderConfig{}, 13);
  TrainConfig cfg;
  cfg.label_smoothing = 0.0;
  Optimizer opt(cfg);
  const double initial = multitask_loss(batch, m, cfg.ctc_alpha, cfg.label_smoothing, false).loss;
  for (int step = 0; step < 200; ++step) {
    LossResult r = multitask_loss(batch, m, cfg.ctc_alpha, cfg.label_smoothing, true);
    opt.step(parameter_list(m), r.grads);
  }
  const double last = multitask_loss(batch, m, cfg.ctc_alpha, cfg.label_smoothing, false).loss;
  MESSAGE("initial " << initial << " final " << last);
  CHECK(last < 0.1 * initial);
}

TEST_CASE("training is bit-reproducible") {
  CorpusConfig cc;
  const SyntheticVoice voice(cc);
  const auto train_set = load_utterances(generate_corpus(voice, 6, 3, "tr"), voice);
  const auto val_set = load_utterances(generate_corpus(voice, 2, 4, "va"), voice);
  const Alphabet alpha = cc.make_alphabet();
  EncoderConfig e;
  e.hidden = 3;
  e.layers = 1;
  DecoderConfig d;
  d.hidden = 6;
  d.attention_dim = 4;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.val_beam_width = 2;
  auto run = [&] {
    HybridModel m = make_hybrid_model(alpha, e, d, 15);
    const TrainResult r = train(m, SystemKind::audio, train_set, val_set, voice, cfg);
    return std::pair{m, r};
  };
  const auto [m1, r1] = run();
  const auto [m2, r2] = run();
  REQUIRE(r1.epochs.size() == 2);
  CHECK_FALSE(r1.diverged);
  CHECK(r1.epochs[1].train_loss == r2.epochs[1].train_loss);
  CHECK(r1.epochs[1].val_cer == r2.epochs[1].val_cer);
  std::vector<Matrix> w1, w2;
  m1.for_each_param([&](const std::string&, const Matrix& w) { w1.push_back(w); });
  m2.for_each_param([&](const std::string&, const Matrix& w) { w2.push_back(w); });
  CHECK(w1 == w2);
  HybridModel untouched = make_hybrid_model(alpha, e, d, 15);
  CHECK(untouched.ctc_w != m1.ctc_w);

  const std::string csv = metrics_csv(r1.epochs);
  CHECK(csv.starts_with("epoch,train_loss,val_loss,val_cer\n1,"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK_THROWS_AS(train(untouched, SystemKind::av_late, train_set, val_set, voice, cfg), UsageError);
}

TEST_CASE("training config round-trips and validates") {
  TrainConfig c;
  c.ctc_alpha = 0.35;
  c.optimizer = OptimizerKind::sgd;
  c.augment_snrs = {-5.0, 2.5, kCleanSnr};
  c.augment_noise = NoiseKind::tonal;
  c.seed = 18446744073709551557ull;
  const auto path = (std::filesystem::temp_directory_path() / "avsr_train_cfg.txt").string();
  c.save(path);
  const TrainConfig r = TrainConfig::load(path);
  CHECK(r.ctc_alpha == 0.35);
  CHECK(r.optimizer == OptimizerKind::sgd);
  CHECK(r.augment_snrs == c.augment_snrs);
  CHECK(r.augment_noise == NoiseKind::tonal);
  CHECK(r.seed == c.seed);
  std::filesystem::remove(path);

  TrainConfig bad;
  bad.ctc_alpha = 1.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.label_smoothing = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_optimizer("adam"), ConfigError);
}
