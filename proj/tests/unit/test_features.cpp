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
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "avsr/error.hpp"
#include "avsr/features.hpp"

using namespace avsr;

namespace {

Waveform tone(double hz, double seconds, double sr = 16000.0, double amp = 1.0) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples.push_back(amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / sr));
  }
  return w;
}

double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double inv_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Filter centres: n + 2 equally spaced mel points from 0 to Nyquist, ends dropped.
std::vector<double> oracle_centers(std::size_t n, double sr) {
  std::vector<double> out;
  for (std::size_t i = 1; i <= n; ++i) {
    out.push_back(inv_mel(mel(sr / 2.0) * static_cast<double>(i) / static_cast<double>(n + 1)));
  }
  return out;
}

FeatureSequence frames_of(std::vector<std::vector<double>> rows, double fps) {
  FeatureSequence s;
  s.fps = fps;
  s.frames = Matrix(rows.size(), rows.front().size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t d = 0; d < rows[t].size(); ++d) s.frames(t, d) = rows[t][d];
  }
  return s;
}

}  // namespace

TEST_CASE("synthesis is deterministic in the seed") {
  const CorpusConfig cfg;
  const Alphabet alpha = cfg.make_alphabet();
  const auto y = alpha.encode("ab");
  const SyntheticUtterance a = synthesize_utterance(y, cfg, 7);
  const SyntheticUtterance b = synthesize_utterance(y, cfg, 7);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.visual.frames == b.visual.frames);
  const SyntheticUtterance c = synthesize_utterance(y, cfg, 8);
  CHECK(a.visual.frames != c.visual.frames);
}

TEST_CASE("zero jitter renders the symbol template") {
  CorpusConfig cfg;
  cfg.duration_jitter = 0.0;
  const SyntheticVoice voice(cfg);
  const int y[] = {3};
  const SyntheticUtterance u = synthesize_utterance(y, voice, 1);
  const auto n = static_cast<std::size_t>(std::round(cfg.symbol_duration * cfg.sample_rate));
  CHECK(u.audio.samples == voice.symbol_template(3, n));
}

TEST_CASE("audio duration equals the sum of symbol durations") {
  const CorpusConfig cfg;
  const SyntheticVoice voice(cfg);
  const TextGenerator text(cfg);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const auto y = text.sample(rng);
    const SyntheticUtterance u = synthesize_utterance(y, voice, rng.next_u64());
    const double total = std::accumulate(u.symbol_durations.begin(), u.symbol_durations.end(), 0.0);
    REQUIRE(u.symbol_durations.size() == y.size());
    CHECK(std::abs(u.audio.duration() - total) < 0.010);
    CHECK(u.visual.dim() == cfg.visual_dim);
    CHECK(std::abs(u.visual.num_frames() / cfg.visual_fps - total) <= 1.0 / cfg.visual_fps);
  }
}

TEST_CASE("symbols sound different") {
  const CorpusConfig cfg;
  const SyntheticVoice voice(cfg);
  const std::size_t n = 1600;
  for (int a = 0; a < static_cast<int>(voice.num_symbols()); ++a) {
    for (int b = a + 1; b < static_cast<int>(voice.num_symbols()); ++b) {
      CHECK(voice.symbol_template(a, n) != voice.symbol_template(b, n));
    }
  }
}

TEST_CASE("unknown labels are rejected") {
  const CorpusConfig cfg;
  CHECK_THROWS_AS(synthesize_utterance(std::vector<int>{99}, cfg, 1), UsageError);
  CHECK_THROWS_AS(synthesize_utterance(std::vector<int>{}, cfg, 1), UsageError);
}

TEST_CASE("transcripts stay in range and use lexicon words") {
  const CorpusConfig cfg;
  const TextGenerator text(cfg);
  const Alphabet alpha = cfg.make_alphabet();
  Rng rng(10);
  for (int i = 0; i < 500; ++i) {
    const auto y = text.sample(rng);
    CHECK(y.size() >= cfg.min_symbols);
    CHECK(y.size() <= cfg.max_symbols);
    const std::string s = alpha.decode(y);
    CHECK(s.front() != ' ');
    CHECK(s.back() != ' ');
    CHECK(s.find("  ") == std::string::npos);
  }
}

TEST_CASE("log-mel frame rate, frame count and silence") {
  Waveform w;
  w.sample_rate = 16000.0;
  w.samples.assign(16000 / 2 + 123, 0.0);
  const FeatureSequence f = log_mel(w);
  CHECK(f.fps == 100.0);
  CHECK(f.dim() == 80);
  CHECK(f.num_frames() == (w.samples.size() - 400) / 160 + 1);
  for (double v : f.frames.values()) CHECK(v == std::log(1e-10));
}

TEST_CASE("too-short waveforms are rejected") {
  Waveform w;
  w.sample_rate = 16000.0;
  w.samples.assign(399, 0.1);
  CHECK_THROWS_AS(log_mel(w), UsageError);
}

TEST_CASE("mel filter centres match an independent construction") {
  const LogMelExtractor mel80(16000.0);
  const auto expect = oracle_centers(80, 16000.0);
  REQUIRE(mel80.centers().size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(mel80.centers()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK(LogMelExtractor::mel_to_hz(LogMelExtractor::hz_to_mel(1234.5)) ==
        doctest::Approx(1234.5).epsilon(1e-12));
}

TEST_CASE("a 1 kHz tone peaks in a filter whose band holds 1 kHz") {
  const auto centers = oracle_centers(80, 16000.0);
  const FeatureSequence f = log_mel(tone(1000.0, 0.5));
  for (std::size_t t = 0; t < f.num_frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < f.dim(); ++m) {
      if (f.frames(t, m) > f.frames(t, best)) best = m;
    }
    REQUIRE(best > 0);
    REQUIRE(best + 1 < centers.size());
    // The peak filter's triangle spans [centre(m-1), centre(m+1)].
    CHECK(centers[best - 1] < 1000.0);
    CHECK(centers[best + 1] > 1000.0);
    CHECK(std::abs(centers[best] - 1000.0) < centers[best + 1] - centers[best - 1]);
  }
}

TEST_CASE("mixing at a given SNR") {
  const Waveform s = tone(440.0, 0.3);
  const CorpusConfig cfg;
  const SyntheticVoice voice(cfg);
  for (NoiseKind kind : kAllNoiseKinds) {
    const Waveform n = make_noise(kind, 8000, voice, 3);
    for (double snr : {-5.0, 0.0, 5.0, 10.0, 15.0, 20.0}) {
      const Waveform m = mix_at_snr(s, n, snr);
      CHECK(std::abs(measured_snr_db(s, m) - snr) < 0.01);
    }
  }
}

TEST_CASE("clean SNR returns the signal exactly") {
  const Waveform s = tone(440.0, 0.1);
  const Waveform n = tone(1000.0, 0.1);
  CHECK(mix_at_snr(s, n, kCleanSnr).samples == s.samples);
}

TEST_CASE("noise gain from the SNR formula") {
  CHECK(noise_gain_for_snr(1.0, 4.0, 10.0) == doctest::Approx(std::sqrt(1.0 / 40.0)).epsilon(1e-15));
  CHECK(noise_gain_for_snr(1.0, 4.0, 10.0) == doctest::Approx(0.1581).epsilon(1e-3));
  CHECK_THROWS_AS(noise_gain_for_snr(0.0, 1.0, 0.0), NumericError);
  CHECK_THROWS_AS(noise_gain_for_snr(1.0, 0.0, 0.0), NumericError);
}

TEST_CASE("zero-power inputs to mixing are numeric errors") {
  const Waveform s = tone(440.0, 0.1);
  Waveform silent = s;
  std::fill(silent.samples.begin(), silent.samples.end(), 0.0);
  CHECK_THROWS_AS(mix_at_snr(silent, s, 0.0), NumericError);
  CHECK_THROWS_AS(mix_at_snr(s, silent, 0.0), NumericError);
}

TEST_CASE("mixing is invariant to the noise amplitude and scales with the SNR") {
  const Waveform s = tone(440.0, 0.2);
  const CorpusConfig cfg;
  const SyntheticVoice voice(cfg);
  const Waveform n = make_noise(NoiseKind::pink, s.samples.size(), voice, 5);
  Waveform n2 = n;
  for (double& v : n2.samples) v *= 2.0;
  const Waveform a = mix_at_snr(s, n, 3.0);
  const Waveform b = mix_at_snr(s, n2, 3.0);
  const Waveform c = mix_at_snr(s, n, 3.0 + 20.0 * std::log10(2.0));
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    CHECK(b.samples[i] == doctest::Approx(a.samples[i]).epsilon(1e-9));
    // +6.02 dB halves the added noise amplitude.
    const double added_a = a.samples[i] - s.samples[i];
    const double added_c = c.samples[i] - s.samples[i];
    CHECK(added_c == doctest::Approx(added_a / 2.0).epsilon(1e-9));
  }
}

TEST_CASE("resampling identity, interpolation and decimation") {
  const FeatureSequence two = frames_of({{1.0, 10.0}, {3.0, 20.0}}, 25.0);
  CHECK(resample_frames(two, 25.0).frames == two.frames);
  const FeatureSequence up = resample_frames(two, 50.0);
  CHECK(up.fps == 50.0);
  // Sampled at t = 0, 0.02, 0.04, 0.06 s with edge clamping.
  CHECK(up.frames == frames_of({{1.0, 10.0}, {2.0, 15.0}, {3.0, 20.0}, {3.0, 20.0}}, 50.0).frames);
  const FeatureSequence five = frames_of({{0.0}, {1.0}, {2.0}, {3.0}, {4.0}}, 100.0);
  const FeatureSequence down = resample_frames(five, 50.0);
  CHECK(down.frames == frames_of({{0.0}, {2.0}, {4.0}}, 50.0).frames);
  CHECK_THROWS_AS(resample_frames(five, 30.0), UsageError);
  CHECK_THROWS_AS(resample_frames(five, 0.0), UsageError);
}

TEST_CASE("25 to 50 to 25 fps round trip is exact") {
  Rng rng(11);
  FeatureSequence v;
  v.fps = 25.0;
  v.frames = Matrix(13, 4);
  for (double& x : v.frames.values()) x = rng.normal();
  CHECK(resample_frames(resample_frames(v, 50.0), 25.0).frames == v.frames);
}

TEST_CASE("per-utterance normalization") {
  Rng rng(12);
  FeatureSequence s;
  s.fps = 100.0;
  s.frames = Matrix(50, 3);
  for (std::size_t t = 0; t < 50; ++t) {
    s.frames(t, 0) = 5.0 + 3.0 * rng.normal();
    s.frames(t, 1) = -2.0 + 0.1 * rng.normal();
    s.frames(t, 2) = 7.0;
  }
  normalize_utterance(s);
  for (std::size_t d = 0; d < 3; ++d) {
    double m = 0.0, v = 0.0;
    for (std::size_t t = 0; t < 50; ++t) m += s.frames(t, d) / 50.0;
    for (std::size_t t = 0; t < 50; ++t) v += (s.frames(t, d) - m) * (s.frames(t, d) - m) / 50.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(d == 2 ? 0.0 : 1.0).epsilon(1e-12));
  }
}

TEST_CASE("stream alignment trims to the shorter stream") {
  FeatureSequence a = frames_of({{1.0}, {2.0}, {3.0}}, 50.0);
  FeatureSequence b = frames_of({{1.0, 1.0}, {2.0, 2.0}}, 50.0);
  align_lengths(a, b);
  CHECK(a.num_frames() == 2);
  CHECK(b.num_frames() == 2);
  FeatureSequence c = frames_of({{1.0}}, 25.0);
  CHECK_THROWS_AS(align_lengths(a, c), UsageError);
}

TEST_CASE("noise families are deterministic and distinct") {
  const CorpusConfig cfg;
  const SyntheticVoice voice(cfg);
  for (NoiseKind kind : kAllNoiseKinds) {
    const Waveform a = make_noise(kind, 4000, voice, 1);
    const Waveform b = make_noise(kind, 4000, voice, 1);
    CHECK(a.samples == b.samples);
    CHECK(a.power() > 0.0);
    CHECK(parse_noise_kind(to_string(kind)) == kind);
  }
  CHECK(make_noise(NoiseKind::white, 100, voice, 1).samples !=
        make_noise(NoiseKind::pink, 100, voice, 1).samples);
  CHECK_THROWS_AS(parse_noise_kind("drill"), UsageError);
}

TEST_CASE("noise bank excerpts have the requested length") {
  const CorpusConfig cfg;
  const SyntheticVoice voice(cfg);
  const NoiseBank bank(voice, 3, 2.0);
  Rng rng(1);
  const Waveform w = bank.excerpt(NoiseKind::babble, 5000, rng);
  CHECK(w.samples.size() == 5000);
  CHECK(w.power() > 0.0);
}

TEST_CASE("feature files round-trip bit-exactly") {
  Rng rng(13);
  FeatureSequence s;
  s.fps = 25.0;
  s.kind = StreamKind::visual;
  s.frames = Matrix(7, 16);
  for (double& x : s.frames.values()) x = rng.normal();
  const auto path = (std::filesystem::temp_directory_path() / "avsr_feat_roundtrip.bin").string();
  write_features(path, s);
  CHECK(std::filesystem::file_size(path) == 16 + 7 * 16 * 8);
  const FeatureSequence r = read_features(path);
  CHECK(r.frames == s.frames);
  CHECK(r.fps == 25.0);
  CHECK(r.kind == StreamKind::visual);
  std::filesystem::remove(path);
}

TEST_CASE("corpus config round-trips") {
  CorpusConfig c;
  c.visual_noise = 0.37;
  c.voice_seed = 99;
  const auto path = (std::filesystem::temp_directory_path() / "avsr_corpus_cfg.txt").string();
  c.save(path);
  const CorpusConfig r = CorpusConfig::load(path);
  CHECK(r.alphabet == c.alphabet);
  CHECK(r.visual_noise == 0.37);
  CHECK(r.voice_seed == 99);
  std::filesystem::remove(path);
}
