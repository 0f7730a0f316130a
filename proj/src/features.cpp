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

#include "avsr/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

#include "avsr/config.hpp"
#include "avsr/error.hpp"

namespace avsr {

double Waveform::power() const {
  if (samples.empty()) return 0.0;
  return squared_norm(samples) / static_cast<double>(samples.size());
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble: return "babble";
    case NoiseKind::tonal: return "tonal";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(const std::string& name) {
  for (NoiseKind k : kAllNoiseKinds)
    if (to_string(k) == name) return k;
  throw UsageError("unknown noise kind '" + name + "' (white, pink, babble, tonal)");
}

// --- corpus config --------------------------------------------------------

void CorpusConfig::save(const std::string& path) const {
  KeyValueFile kv;
  kv.set("alphabet", alphabet);
  kv.set("sample_rate", sample_rate);
  kv.set("symbol_duration", symbol_duration);
  kv.set("duration_jitter", duration_jitter);
  kv.set("visual_dim", static_cast<double>(visual_dim));
  kv.set("visual_fps", visual_fps);
  kv.set("visual_noise", visual_noise);
  kv.set("voice_seed", std::to_string(voice_seed));
  kv.set("min_symbols", static_cast<double>(min_symbols));
  kv.set("max_symbols", static_cast<double>(max_symbols));
  kv.set("lexicon_size", static_cast<double>(lexicon_size));
  kv.set("max_word_length", static_cast<double>(max_word_length));
  kv.write(path);
}

CorpusConfig CorpusConfig::load(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::read(path);
  kv.require_known({"alphabet", "sample_rate", "symbol_duration", "duration_jitter", "visual_dim",
                    "visual_fps", "visual_noise", "voice_seed", "min_symbols", "max_symbols",
                    "lexicon_size", "max_word_length"});
  CorpusConfig c;
  c.alphabet = kv.get("alphabet");
  c.sample_rate = kv.get_double("sample_rate");
  c.symbol_duration = kv.get_double("symbol_duration");
  c.duration_jitter = kv.get_double("duration_jitter");
  c.visual_dim = static_cast<std::size_t>(kv.get_int("visual_dim"));
  c.visual_fps = kv.get_double("visual_fps");
  c.visual_noise = kv.get_double("visual_noise");
  c.voice_seed = std::stoull(kv.get("voice_seed"));
  c.min_symbols = static_cast<std::size_t>(kv.get_int("min_symbols"));
  c.max_symbols = static_cast<std::size_t>(kv.get_int("max_symbols"));
  c.lexicon_size = static_cast<std::size_t>(kv.get_int("lexicon_size"));
  c.max_word_length = static_cast<std::size_t>(kv.get_int("max_word_length"));
  return c;
}

// --- synthetic voice ------------------------------------------------------

namespace {

double frac(double x) { return x - std::floor(x); }

constexpr double kRampSeconds = 0.010;

}  // namespace

SyntheticVoice::SyntheticVoice(const CorpusConfig& config) : config_(config) {
  const Alphabet alphabet = config.make_alphabet();
  Rng rng(derive_seed(config.voice_seed, 0x766f696365ULL));
  const double nyquist = config.sample_rate / 2.0;
  for (std::size_t i = 0; i < alphabet.num_labels(); ++i) {
    Symbol s;
    // Low-discrepancy placement keeps formant pairs well separated.
    s.f0 = 100.0 + 80.0 * frac(0.3 + static_cast<double>(i) * 0.7548776662);
    s.formant1 = 300.0 + 600.0 * frac(0.5 + static_cast<double>(i) * 0.6180339887);
    s.formant2 = 1000.0 + 1800.0 * frac(0.25 + static_cast<double>(i) * 0.4142135624);
    double energy = 0.0;
    for (int k = 1; k * s.f0 < std::min(5000.0, 0.9 * nyquist); ++k) {
      const double f = k * s.f0;
      const double d1 = (f - s.formant1) / 120.0;
      const double d2 = (f - s.formant2) / 180.0;
      const double gain = std::exp(-d1 * d1) + 0.7 * std::exp(-d2 * d2) + 0.02;
      s.harmonic_gain.push_back(gain);
      s.harmonic_phase.push_back(rng.uniform(0.0, 2.0 * M_PI));
      energy += gain * gain / 2.0;
    }
    for (double& g : s.harmonic_gain) g /= std::sqrt(energy);
    s.anchor.resize(config.visual_dim);
    for (double& a : s.anchor) a = rng.normal();
    symbols_.push_back(std::move(s));
  }
}

std::vector<double> SyntheticVoice::symbol_template(int symbol, std::size_t num_samples) const {
  if (symbol < 0 || static_cast<std::size_t>(symbol) >= symbols_.size()) {
    throw UsageError("unknown label " + std::to_string(symbol));
  }
  const Symbol& s = symbols_[static_cast<std::size_t>(symbol)];
  std::vector<double> out(num_samples, 0.0);
  const double step = 2.0 * M_PI * s.f0 / config_.sample_rate;
  for (std::size_t k = 0; k < s.harmonic_gain.size(); ++k) {
    const double w = step * static_cast<double>(k + 1);
    const double g = s.harmonic_gain[k];
    const double phi = s.harmonic_phase[k];
    for (std::size_t n = 0; n < num_samples; ++n) {
      out[n] += g * std::sin(w * static_cast<double>(n) + phi);
    }
  }
  const std::size_t ramp = std::min(
      static_cast<std::size_t>(kRampSeconds * config_.sample_rate), num_samples / 2);
  for (std::size_t n = 0; n < ramp; ++n) {
    const double e = 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(n) / static_cast<double>(ramp));
    out[n] *= e;
    out[num_samples - 1 - n] *= e;
  }
  return out;
}

SyntheticUtterance synthesize_utterance(std::span<const int> labels, const CorpusConfig& config,
                                        std::uint64_t seed) {
  return synthesize_utterance(labels, SyntheticVoice(config), seed);
}

SyntheticUtterance synthesize_utterance(std::span<const int> labels, const SyntheticVoice& voice,
                                        std::uint64_t seed) {
  if (labels.empty()) throw UsageError("synthesize_utterance: empty label sequence");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= voice.num_symbols()) {
      throw UsageError("synthesize_utterance: unknown label " + std::to_string(y));
    }
  }
  const CorpusConfig& cfg = voice.config();
  Rng rng(seed);
  SyntheticUtterance utt;
  utt.audio.sample_rate = cfg.sample_rate;

  std::vector<double> starts;
  double clock = 0.0;
  for (int y : labels) {
    const double jitter = cfg.duration_jitter * (2.0 * rng.uniform() - 1.0);
    const auto n = static_cast<std::size_t>(
        std::max(1.0, std::round((cfg.symbol_duration + jitter) * cfg.sample_rate)));
    const std::vector<double> tpl = voice.symbol_template(y, n);
    utt.audio.samples.insert(utt.audio.samples.end(), tpl.begin(), tpl.end());
    const double dur = static_cast<double>(n) / cfg.sample_rate;
    starts.push_back(clock);
    utt.symbol_durations.push_back(dur);
    clock += dur;
  }

  // Visual trajectory: smoothstep interpolation between per-symbol anchors
  // placed at segment centres, held flat before the first and after the last.
  const std::size_t D = cfg.visual_dim;
  const auto frames =
      static_cast<std::size_t>(std::max(1.0, std::ceil(clock * cfg.visual_fps - 1e-9)));
  utt.visual.fps = cfg.visual_fps;
  utt.visual.kind = StreamKind::visual;
  utt.visual.frames = Matrix(frames, D);
  std::vector<double> centers;
  for (std::size_t i = 0; i < labels.size(); ++i)
    centers.push_back(starts[i] + utt.symbol_durations[i] / 2.0);
  for (std::size_t k = 0; k < frames; ++k) {
    const double tau = (static_cast<double>(k) + 0.5) / cfg.visual_fps;
    auto dst = utt.visual.frames.row(k);
    std::size_t seg = 0;
    while (seg + 1 < centers.size() && centers[seg + 1] <= tau) ++seg;
    const auto a = voice.visual_anchor(labels[seg]);
    if (tau <= centers.front() || seg + 1 == centers.size()) {
      std::copy(a.begin(), a.end(), dst.begin());
    } else {
      const auto b = voice.visual_anchor(labels[seg + 1]);
      const double u = (tau - centers[seg]) / (centers[seg + 1] - centers[seg]);
      const double s = u * u * (3.0 - 2.0 * u);
      for (std::size_t d = 0; d < D; ++d) dst[d] = a[d] + s * (b[d] - a[d]);
    }
    for (std::size_t d = 0; d < D; ++d) dst[d] += cfg.visual_noise * rng.normal();
  }
  return utt;
}

// --- text -----------------------------------------------------------------

TextGenerator::TextGenerator(const CorpusConfig& config) : config_(config) {
  const Alphabet alphabet = config.make_alphabet();
  const auto space_pos = config.alphabet.find(' ');
  if (space_pos != std::string::npos) space_ = static_cast<int>(space_pos);
  std::vector<int> letters;
  for (std::size_t i = 0; i < alphabet.num_labels(); ++i)
    if (static_cast<int>(i) != space_) letters.push_back(static_cast<int>(i));
  if (letters.empty()) throw UsageError("alphabet has no letters");
  if (config.min_symbols == 0 || config.max_symbols < config.min_symbols) {
    throw UsageError("corpus config: need 0 < min_symbols <= max_symbols");
  }
  Rng rng(derive_seed(config.voice_seed, 0x6c6578ULL));
  const std::size_t max_len = std::max<std::size_t>(1, config.max_word_length);
  while (lexicon_.size() < config.lexicon_size) {
    const std::size_t len = 1 + rng.index(max_len);
    std::vector<int> word;
    for (std::size_t i = 0; i < len; ++i) word.push_back(letters[rng.index(letters.size())]);
    if (std::find(lexicon_.begin(), lexicon_.end(), word) == lexicon_.end())
      lexicon_.push_back(std::move(word));
  }
  if (lexicon_.empty()) throw UsageError("corpus config: empty lexicon");
}

std::vector<int> TextGenerator::sample(Rng& rng) const {
  for (;;) {
    std::vector<int> out;
    const std::size_t words = space_ >= 0 ? 1 + rng.index(4) : 1;
    for (std::size_t w = 0; w < words; ++w) {
      if (w > 0) out.push_back(space_);
      const auto& word = lexicon_[rng.index(lexicon_.size())];
      out.insert(out.end(), word.begin(), word.end());
    }
    if (out.size() >= config_.min_symbols && out.size() <= config_.max_symbols) return out;
  }
}

// --- log mel --------------------------------------------------------------

namespace {
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct LogMelExtractor::Plan {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
};

double LogMelExtractor::hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double LogMelExtractor::mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

LogMelExtractor::LogMelExtractor(double sample_rate, LogMelConfig config)
    : sample_rate_(sample_rate), config_(config) {
  if (sample_rate <= 0 || config.n_mels == 0) throw UsageError("log_mel: bad configuration");
  window_ = static_cast<std::size_t>(std::round(config.window * sample_rate));
  hop_ = static_cast<std::size_t>(std::round(config.hop * sample_rate));
  if (window_ == 0 || hop_ == 0) throw UsageError("log_mel: window and hop must be positive");
  n_fft_ = std::bit_ceil(window_);
  hamming_.resize(window_);
  for (std::size_t n = 0; n < window_; ++n) {
    hamming_[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(n) /
                                         static_cast<double>(window_ - 1));
  }

  const std::size_t bins = n_fft_ / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(config.n_mels + 1));
  }
  centers_.assign(edges.begin() + 1, edges.end() - 1);
  filters_ = Matrix(config.n_mels, bins);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / static_cast<double>(n_fft_);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      filters_(m, b) = w;
    }
  }

  plan_ = std::make_unique<Plan>();
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  plan_->in = fftw_alloc_real(n_fft_);
  plan_->out = fftw_alloc_complex(bins);
  plan_->plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft_), plan_->in, plan_->out, FFTW_ESTIMATE);
}

LogMelExtractor::~LogMelExtractor() {
  if (!plan_) return;
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftw_destroy_plan(plan_->plan);
  fftw_free(plan_->in);
  fftw_free(plan_->out);
}

FeatureSequence LogMelExtractor::operator()(const Waveform& w) const {
  if (w.sample_rate != sample_rate_) throw UsageError("log_mel: sample rate mismatch");
  if (w.samples.size() < window_) {
    throw UsageError("log_mel: waveform shorter than one analysis window");
  }
  const std::size_t frames = (w.samples.size() - window_) / hop_ + 1;
  const std::size_t bins = n_fft_ / 2 + 1;
  FeatureSequence seq;
  seq.fps = sample_rate_ / static_cast<double>(hop_);
  seq.kind = StreamKind::audio;
  seq.frames = Matrix(frames, config_.n_mels);
  std::vector<double> magnitude(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * hop_;
    for (std::size_t n = 0; n < window_; ++n) plan_->in[n] = src[n] * hamming_[n];
    for (std::size_t n = window_; n < n_fft_; ++n) plan_->in[n] = 0.0;
    fftw_execute(plan_->plan);
    for (std::size_t b = 0; b < bins; ++b) {
      magnitude[b] = std::hypot(plan_->out[b][0], plan_->out[b][1]);
    }
    auto dst = seq.frames.row(t);
    for (std::size_t m = 0; m < config_.n_mels; ++m) {
      auto f = filters_.row(m);
      double e = 0.0;
      for (std::size_t b = 0; b < bins; ++b) e += f[b] * magnitude[b];
      dst[m] = std::log(std::max(e, config_.floor));
    }
  }
  return seq;
}

FeatureSequence log_mel(const Waveform& w, const LogMelConfig& config) {
  return LogMelExtractor(w.sample_rate, config)(w);
}

// --- noise mixing ---------------------------------------------------------

double noise_gain_for_snr(double signal_power, double noise_power, double snr_db) {
  if (!(signal_power > 0.0)) throw NumericError("mix_at_snr: signal has zero power");
  if (!(noise_power > 0.0)) throw NumericError("mix_at_snr: noise has zero power");
  if (!std::isfinite(snr_db)) throw UsageError("mix_at_snr: SNR must be finite");
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

Waveform mix_at_snr(const Waveform& signal, const Waveform& noise, double snr_db) {
  if (signal.sample_rate != noise.sample_rate) {
    throw UsageError("mix_at_snr: sample rates differ");
  }
  if (snr_db == kCleanSnr) return signal;
  if (noise.samples.empty()) throw NumericError("mix_at_snr: noise has zero power");
  const std::size_t n = signal.samples.size();
  std::vector<double> tiled(n);
  for (std::size_t i = 0; i < n; ++i) tiled[i] = noise.samples[i % noise.samples.size()];
  const double ps = signal.power();
  const double pn = n == 0 ? 0.0 : squared_norm(tiled) / static_cast<double>(n);
  const double k = noise_gain_for_snr(ps, pn, snr_db);
  Waveform out = signal;
  for (std::size_t i = 0; i < n; ++i) out.samples[i] += k * tiled[i];
  return out;
}

double measured_snr_db(const Waveform& signal, const Waveform& mixed) {
  if (signal.samples.size() != mixed.samples.size()) throw UsageError("length mismatch");
  double pn = 0.0;
  for (std::size_t i = 0; i < signal.samples.size(); ++i) {
    const double d = mixed.samples[i] - signal.samples[i];
    pn += d * d;
  }
  pn /= static_cast<double>(signal.samples.size());
  return 10.0 * std::log10(signal.power() / pn);
}

// --- frame rates ----------------------------------------------------------

FeatureSequence resample_frames(const FeatureSequence& seq, double target_fps) {
  if (!(target_fps > 0.0)) throw UsageError("resample_frames: target fps must be positive");
  if (!(seq.fps > 0.0)) throw UsageError("resample_frames: input fps must be positive");
  if (target_fps == seq.fps) return seq;
  const std::size_t T = seq.num_frames();
  const std::size_t D = seq.dim();
  FeatureSequence out;
  out.fps = target_fps;
  out.kind = seq.kind;
  if (target_fps < seq.fps) {
    const double ratio = seq.fps / target_fps;
    const double r = std::round(ratio);
    if (std::abs(ratio - r) > 1e-9) {
      throw UsageError("resample_frames: downsampling ratio " + format_double(ratio) +
                       " is not an integer");
    }
    const auto step = static_cast<std::size_t>(r);
    const std::size_t n = (T + step - 1) / step;
    out.frames = Matrix(n, D);
    for (std::size_t j = 0; j < n; ++j) {
      std::copy(seq.frames.row(j * step).begin(), seq.frames.row(j * step).end(),
                out.frames.row(j).begin());
    }
    return out;
  }
  if (T == 0) {
    out.frames = Matrix(0, D);
    return out;
  }
  const auto n = static_cast<std::size_t>(
      std::ceil(static_cast<double>(T) * target_fps / seq.fps - 1e-9));
  out.frames = Matrix(n, D);
  for (std::size_t j = 0; j < n; ++j) {
    const double pos = static_cast<double>(j) * seq.fps / target_fps;
    const auto i0 = std::min(static_cast<std::size_t>(std::floor(pos)), T - 1);
    const std::size_t i1 = std::min(i0 + 1, T - 1);
    const double a = pos - static_cast<double>(i0);
    auto dst = out.frames.row(j);
    auto f0 = seq.frames.row(i0);
    auto f1 = seq.frames.row(i1);
    if (a == 0.0 || i0 == i1) {
      std::copy(f0.begin(), f0.end(), dst.begin());
    } else {
      for (std::size_t d = 0; d < D; ++d) dst[d] = (1.0 - a) * f0[d] + a * f1[d];
    }
  }
  return out;
}

void normalize_utterance(FeatureSequence& seq) {
  const std::size_t T = seq.num_frames();
  if (T == 0) return;
  for (std::size_t d = 0; d < seq.dim(); ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += seq.frames(t, d);
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double c = seq.frames(t, d) - mean;
      var += c * c;
    }
    var /= static_cast<double>(T);
    const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < T; ++t) seq.frames(t, d) = (seq.frames(t, d) - mean) * inv;
  }
}

void align_lengths(FeatureSequence& a, FeatureSequence& b) {
  if (a.fps != b.fps) throw UsageError("align_lengths: frame rates differ");
  const std::size_t n = std::min(a.num_frames(), b.num_frames());
  auto trim = [n](FeatureSequence& s) {
    if (s.num_frames() == n) return;
    std::vector<double> data(s.frames.data(), s.frames.data() + n * s.dim());
    s.frames = Matrix(n, s.dim(), std::move(data));
  };
  trim(a);
  trim(b);
}

// --- noise ----------------------------------------------------------------

Waveform make_noise(NoiseKind kind, std::size_t num_samples, const SyntheticVoice& voice,
                    std::uint64_t seed) {
  const double sr = voice.config().sample_rate;
  Waveform w;
  w.sample_rate = sr;
  w.samples.assign(num_samples, 0.0);
  Rng rng(seed);
  switch (kind) {
    case NoiseKind::white:
      for (double& s : w.samples) s = rng.normal();
      break;
    case NoiseKind::pink: {
      // Paul Kellet's economy pinking filter.
      double b0 = 0.0, b1 = 0.0, b2 = 0.0;
      for (double& s : w.samples) {
        const double white = rng.normal();
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        s = b0 + b1 + b2 + white * 0.1848;
      }
      break;
    }
    case NoiseKind::babble: {
      const TextGenerator text(voice.config());
      constexpr int kTalkers = 6;
      for (int talker = 0; talker < kTalkers; ++talker) {
        std::vector<double> track;
        while (track.size() < num_samples) {
          const auto labels = text.sample(rng);
          const auto utt = synthesize_utterance(labels, voice, rng.next_u64());
          track.insert(track.end(), utt.audio.samples.begin(), utt.audio.samples.end());
        }
        // Random start so talkers do not share symbol boundaries.
        const std::size_t offset = rng.index(std::max<std::size_t>(1, track.size() - num_samples + 1));
        double power = 0.0;
        for (std::size_t i = 0; i < num_samples; ++i) power += track[offset + i] * track[offset + i];
        power = num_samples ? power / static_cast<double>(num_samples) : 1.0;
        const double g = power > 0 ? 1.0 / std::sqrt(power) : 0.0;
        for (std::size_t i = 0; i < num_samples; ++i) w.samples[i] += g * track[offset + i];
      }
      break;
    }
    case NoiseKind::tonal: {
      const double p1 = rng.uniform(0.0, 2.0 * M_PI);
      const double p2 = rng.uniform(0.0, 2.0 * M_PI);
      double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t n = 0; n < num_samples; ++n) {
        const double t = static_cast<double>(n) / sr;
        const double f = 1400.0 + 1000.0 * std::sin(2.0 * M_PI * 0.5 * t + p1) +
                         300.0 * std::sin(2.0 * M_PI * 1.7 * t + p2);
        phase += 2.0 * M_PI * f / sr;
        w.samples[n] = std::sin(phase);
      }
      break;
    }
  }
  return w;
}

NoiseBank::NoiseBank(const SyntheticVoice& voice, std::uint64_t seed, double seconds) {
  const auto n = static_cast<std::size_t>(seconds * voice.config().sample_rate);
  for (NoiseKind kind : kAllNoiseKinds) {
    noise_.push_back(make_noise(kind, n, voice, derive_seed(seed, static_cast<std::uint64_t>(kind))));
  }
}

Waveform NoiseBank::excerpt(NoiseKind kind, std::size_t num_samples, Rng& rng) const {
  const Waveform& src = noise_.at(static_cast<std::size_t>(kind));
  Waveform out;
  out.sample_rate = src.sample_rate;
  out.samples.resize(num_samples);
  const std::size_t start = rng.index(src.samples.size());
  for (std::size_t i = 0; i < num_samples; ++i) {
    out.samples[i] = src.samples[(start + i) % src.samples.size()];
  }
  return out;
}

// --- feature files --------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'A', 'V', 'F', 'S'};
constexpr std::uint8_t kFeatureVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::istream& in) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == EOF) throw ConfigError("feature file truncated");
    v |= static_cast<U>(static_cast<std::uint8_t>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_features(const std::string& path, const FeatureSequence& seq) {
  if (seq.dim() > 0xffff || seq.num_frames() > 0xffffffffULL) {
    throw UsageError("write_features: sequence too large for the header");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(kFeatureMagic, 4);
  put_le<std::uint8_t>(out, kFeatureVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(seq.kind));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(seq.dim()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq.num_frames()));
  put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(seq.fps)));
  for (double v : seq.frames.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw ConfigError("failed writing " + path);
}

FeatureSequence read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw ConfigError(path + ": not a feature file");
  }
  const auto version = get_le<std::uint8_t>(in);
  if (version != kFeatureVersion) throw ConfigError(path + ": unsupported version");
  const auto kind = get_le<std::uint8_t>(in);
  if (kind > 2) throw ConfigError(path + ": bad stream kind");
  const auto D = get_le<std::uint16_t>(in);
  const auto T = get_le<std::uint32_t>(in);
  const float fps = std::bit_cast<float>(get_le<std::uint32_t>(in));
  FeatureSequence seq;
  seq.kind = static_cast<StreamKind>(kind);
  seq.fps = fps;
  seq.frames = Matrix(T, D);
  for (double& v : seq.frames.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return seq;
}

}  // namespace avsr
