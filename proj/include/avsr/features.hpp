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

// Synthetic audio-visual utterances, log-mel audio features, SNR-controlled
// noise mixing and frame-rate conversion.

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "avsr/alphabet.hpp"
#include "avsr/numerics.hpp"

namespace avsr {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double power() const;
};

enum class StreamKind : std::uint8_t { audio = 0, visual = 1, lattice = 2 };

// T x D frames at a fixed frame rate.
struct FeatureSequence {
  Matrix frames;
  double fps = 0.0;
  StreamKind kind = StreamKind::audio;

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

enum class NoiseKind { white, pink, babble, tonal };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);
inline constexpr NoiseKind kAllNoiseKinds[] = {NoiseKind::white, NoiseKind::pink,
                                               NoiseKind::babble, NoiseKind::tonal};

// +inf SNR means clean audio.
inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

struct NoiseSpec {
  NoiseKind kind = NoiseKind::babble;
  double snr_db = kCleanSnr;

  bool clean() const { return snr_db == kCleanSnr; }
};

// Everything that pins the synthetic corpus. Two corpora generated with
// equal configs and seeds are byte-identical.
struct CorpusConfig {
  std::string alphabet{kDefaultAlphabet};
  double sample_rate = 16000.0;
  double symbol_duration = 0.10;  // seconds
  double duration_jitter = 0.02;  // uniform +- seconds
  std::size_t visual_dim = 16;
  double visual_fps = 25.0;
  double visual_noise = 2.0;
  std::uint64_t voice_seed = 20190227;  // symbol templates, anchors, lexicon
  std::size_t min_symbols = 3;
  std::size_t max_symbols = 8;
  std::size_t lexicon_size = 24;
  std::size_t max_word_length = 4;

  Alphabet make_alphabet() const { return Alphabet(alphabet); }
  void save(const std::string& path) const;
  static CorpusConfig load(const std::string& path);
};

// Per-symbol audio signatures and visual anchors derived from
// CorpusConfig::voice_seed. Each symbol sounds like a steady vowel: a
// harmonic series on its own f0 shaped by two formant resonances.
class SyntheticVoice {
 public:
  explicit SyntheticVoice(const CorpusConfig& config);

  std::size_t num_symbols() const { return symbols_.size(); }
  // The symbol's waveform over `num_samples` samples, 10 ms raised-cosine
  // onset and offset, unit RMS before the ramps.
  std::vector<double> symbol_template(int symbol, std::size_t num_samples) const;
  std::span<const double> visual_anchor(int symbol) const { return symbols_.at(symbol).anchor; }
  const CorpusConfig& config() const { return config_; }

 private:
  struct Symbol {
    double f0 = 0.0;
    double formant1 = 0.0;
    double formant2 = 0.0;
    std::vector<double> harmonic_gain;
    std::vector<double> harmonic_phase;
    std::vector<double> anchor;
  };
  CorpusConfig config_;
  std::vector<Symbol> symbols_;
};

struct SyntheticUtterance {
  Waveform audio;
  FeatureSequence visual;  // visual_fps, StreamKind::visual
  std::vector<double> symbol_durations;  // seconds, as rendered
};

// Renders `labels` with per-symbol duration jitter and a smoothed visual
// trajectory with Gaussian observation noise. Deterministic in `seed`.
SyntheticUtterance synthesize_utterance(std::span<const int> labels, const CorpusConfig& config,
                                        std::uint64_t seed);
SyntheticUtterance synthesize_utterance(std::span<const int> labels, const SyntheticVoice& voice,
                                        std::uint64_t seed);

// Draws a transcript of min..max symbols made of lexicon words separated
// by single spaces (when the alphabet has a space).
class TextGenerator {
 public:
  explicit TextGenerator(const CorpusConfig& config);
  std::vector<int> sample(Rng& rng) const;
  const std::vector<std::vector<int>>& lexicon() const { return lexicon_; }

 private:
  CorpusConfig config_;
  int space_ = -1;
  std::vector<std::vector<int>> lexicon_;
};

struct LogMelConfig {
  std::size_t n_mels = 80;
  double window = 0.025;  // seconds, Hamming
  double hop = 0.010;     // seconds
  double floor = 1e-10;   // energies are clamped here before the log
};

// Mel filterbank on the 2595 * log10(1 + f / 700) scale, triangular filters
// with unit peak between 0 Hz and Nyquist.
class LogMelExtractor {
 public:
  LogMelExtractor(double sample_rate, LogMelConfig config = {});
  ~LogMelExtractor();
  LogMelExtractor(const LogMelExtractor&) = delete;
  LogMelExtractor& operator=(const LogMelExtractor&) = delete;

  FeatureSequence operator()(const Waveform& w) const;

  std::size_t window_samples() const { return window_; }
  std::size_t hop_samples() const { return hop_; }
  std::size_t fft_size() const { return n_fft_; }
  // Centre frequency of each filter in Hz.
  const std::vector<double>& centers() const { return centers_; }
  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);

 private:
  struct Plan;
  double sample_rate_;
  LogMelConfig config_;
  std::size_t window_, hop_, n_fft_;
  std::vector<double> hamming_;
  std::vector<double> centers_;
  Matrix filters_;  // n_mels x (n_fft / 2 + 1)
  std::unique_ptr<Plan> plan_;
};

// One-shot convenience wrapper around LogMelExtractor. Output fps = 1/hop.
FeatureSequence log_mel(const Waveform& w, const LogMelConfig& config = {});

// signal + k * noise with k chosen so 10 log10(P_signal / P_scaled_noise)
// equals snr_db. Noise shorter than the signal is tiled. snr_db = +inf
// returns the signal unchanged.
Waveform mix_at_snr(const Waveform& signal, const Waveform& noise, double snr_db);
// The k used by mix_at_snr.
double noise_gain_for_snr(double signal_power, double noise_power, double snr_db);
double measured_snr_db(const Waveform& signal, const Waveform& mixed);

// Linear interpolation (edge-clamped) for upsampling; integer-ratio frame
// decimation keeping frames 0, r, 2r, ... for downsampling.
FeatureSequence resample_frames(const FeatureSequence& seq, double target_fps);

// Per-utterance, per-dimension mean and variance normalization. Dimensions
// with zero variance are only centred.
void normalize_utterance(FeatureSequence& seq);

// Trims two equal-rate streams to their common frame count.
void align_lengths(FeatureSequence& a, FeatureSequence& b);

// Procedural noise of the given family. Babble sums six independent
// synthetic talkers; tonal is a single tone whose frequency wanders over
// the formant range.
Waveform make_noise(NoiseKind kind, std::size_t num_samples, const SyntheticVoice& voice,
                    std::uint64_t seed);

// Long pre-rendered noise per family; draws random excerpts.
class NoiseBank {
 public:
  NoiseBank(const SyntheticVoice& voice, std::uint64_t seed, double seconds = 30.0);
  Waveform excerpt(NoiseKind kind, std::size_t num_samples, Rng& rng) const;

 private:
  std::vector<Waveform> noise_;
};

// Binary feature/lattice files: 16-byte little-endian header
//   bytes 0-3  magic "AVFS"
//   byte  4    version (1)
//   byte  5    stream kind (0 audio, 1 visual, 2 lattice)
//   bytes 6-7  D  (uint16)
//   bytes 8-11 T  (uint32)
//   bytes 12-15 fps (float32)
// followed by T x D float64 values, row-major.
void write_features(const std::string& path, const FeatureSequence& seq);
FeatureSequence read_features(const std::string& path);

}  // namespace avsr
