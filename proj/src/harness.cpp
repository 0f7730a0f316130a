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

#include "avsr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "avsr/config.hpp"
#include "avsr/error.hpp"

namespace avsr {
namespace {

const HybridModel& need(const HybridModel* m, const char* what) {
  if (!m) throw ConfigError(std::string("missing checkpoint for the ") + what + " model");
  return *m;
}

DecodeResult best_or_empty(std::vector<DecodeResult> results) {
  return results.empty() ? DecodeResult{} : std::move(results.front());
}

// Decoding inputs of one utterance, prepared lazily per stream.
class UtteranceStreams {
 public:
  UtteranceStreams(const Recognizers& models, const Frontend& frontend, const Waveform& audio,
                   const FeatureSequence& visual)
      : models_(models), frontend_(frontend), audio_(audio), visual_(visual) {}

  const DecodeStream& audio() {
    if (!a_) {
      a_ = prepare_stream(need(models_.audio, "A"),
                          frontend_(SystemKind::audio, audio_, visual_), models_.lm);
    }
    return *a_;
  }
  const DecodeStream& visual() {
    if (!v_) {
      v_ = prepare_stream(need(models_.visual, "V"),
                          frontend_(SystemKind::visual, audio_, visual_), models_.lm);
    }
    return *v_;
  }
  const DecodeStream& av() {
    if (!av_) {
      av_ = prepare_stream(need(models_.av_early, "AV-early"),
                           frontend_(SystemKind::av_early, audio_, visual_), models_.lm);
    }
    return *av_;
  }

 private:
  const Recognizers& models_;
  const Frontend& frontend_;
  const Waveform& audio_;
  const FeatureSequence& visual_;
  std::optional<DecodeStream> a_, v_, av_;
};

DecodeResult decode_system(SystemKind system, const EvalConfig& cfg, UtteranceStreams& s) {
  switch (system) {
    case SystemKind::audio: return best_or_empty(beam_search(s.audio(), cfg.audio_beam));
    case SystemKind::visual: return best_or_empty(beam_search(s.visual(), cfg.visual_beam));
    case SystemKind::av_early: return best_or_empty(beam_search(s.av(), cfg.av_beam));
    case SystemKind::av_late: {
      FusionConfig fusion = cfg.fusion;
      if (fusion.mode == FusionMode::early) fusion.mode = FusionMode::late;
      return best_or_empty(
          late_fusion_search(s.audio(), s.visual(), cfg.audio_beam, cfg.visual_beam, fusion));
    }
  }
  return {};
}

Waveform corrupt(const Waveform& audio, const NoiseSpec& noise, const NoiseBank& bank,
                 std::uint64_t seed, std::size_t index, double* snr_error) {
  if (noise.clean()) return audio;
  Rng rng(derive_seed(seed, index));
  const Waveform mixed =
      mix_at_snr(audio, bank.excerpt(noise.kind, audio.samples.size(), rng), noise.snr_db);
  if (snr_error) *snr_error = std::abs(measured_snr_db(audio, mixed) - noise.snr_db);
  return mixed;
}

std::size_t system_rank(SystemKind k) { return static_cast<std::size_t>(k); }

}  // namespace

EncoderConfig encoder_config_for(SystemKind system, const CorpusConfig& corpus,
                                 std::size_t hidden, std::size_t layers) {
  EncoderConfig c;
  c.hidden = hidden;
  c.layers = layers;
  c.visual_dim = corpus.visual_dim;
  switch (system) {
    case SystemKind::audio: c.input_dim = LogMelConfig{}.n_mels; break;
    case SystemKind::visual: c.input_dim = corpus.visual_dim; break;
    case SystemKind::av_early:
      c.topology = EncoderTopology::early_fusion;
      c.input_dim = LogMelConfig{}.n_mels;
      break;
    case SystemKind::av_late:
      throw UsageError("AV-late combines the A and V models and has no encoder of its own");
  }
  return c;
}

HybridModel make_system_model(SystemKind system, const CorpusConfig& corpus, std::uint64_t seed,
                              std::size_t hidden, std::size_t layers) {
  return make_hybrid_model(corpus.make_alphabet(), encoder_config_for(system, corpus, hidden, layers),
                           DecoderConfig{}, seed);
}

void require_models(SystemKind system, const Recognizers& m) {
  switch (system) {
    case SystemKind::audio: need(m.audio, "A"); break;
    case SystemKind::visual: need(m.visual, "V"); break;
    case SystemKind::av_early: need(m.av_early, "AV-early"); break;
    case SystemKind::av_late:
      need(m.audio, "A");
      need(m.visual, "V");
      break;
  }
}

DecodeResult recognize(SystemKind system, const Recognizers& models, const EvalConfig& cfg,
                       const Frontend& frontend, const Waveform& audio,
                       const FeatureSequence& visual) {
  require_models(system, models);
  UtteranceStreams streams(models, frontend, audio, visual);
  return decode_system(system, cfg, streams);
}

EvalReport evaluate(SystemKind system, const Recognizers& models, const EvalConfig& cfg,
                    const std::vector<Utterance>& utterances, const NoiseSpec& noise,
                    const NoiseBank& bank, std::uint64_t seed) {
  require_models(system, models);
  EvalReport report;
  if (utterances.empty()) throw UsageError("nothing to evaluate");
  const Frontend frontend(utterances.front().signal.audio.sample_rate);
  const HybridModel& any = models.audio ? *models.audio : models.visual ? *models.visual
                                                                        : *models.av_early;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    const Waveform audio = corrupt(u.signal.audio, noise, bank, seed, i, nullptr);
    Transcript t;
    t.id = u.id;
    t.reference = any.alphabet.decode(u.labels);
    t.result = recognize(system, models, cfg, frontend, audio, u.signal.visual);
    t.hypothesis = any.alphabet.decode(t.result.labels);
    report.words += word_errors(t.reference, t.hypothesis);
    report.chars += char_errors(t.reference, t.hypothesis);
    report.transcripts.push_back(std::move(t));
  }
  return report;
}

SweepReport noise_sweep(const Recognizers& models, const std::vector<Utterance>& utterances,
                        const NoiseBank& bank, const SweepConfig& cfg) {
  for (SystemKind s : cfg.systems) require_models(s, models);
  if (utterances.empty()) throw UsageError("nothing to evaluate");
  for (double snr : cfg.snrs) {
    if (std::isnan(snr) || snr == -kCleanSnr) throw UsageError("sweep SNRs must be finite or clean");
  }
  const Frontend frontend(utterances.front().signal.audio.sample_rate);
  const bool want_v = std::count(cfg.systems.begin(), cfg.systems.end(), SystemKind::visual) > 0;
  const Alphabet& alphabet = models.audio ? models.audio->alphabet
                             : models.visual ? models.visual->alphabet
                                             : models.av_early->alphabet;

  // The visual stream never sees audio noise; decode it once per utterance.
  std::vector<std::string> references;
  std::vector<std::optional<std::string>> visual_hyps(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    references.push_back(alphabet.decode(utterances[i].labels));
    if (want_v) {
      UtteranceStreams s(models, frontend, utterances[i].signal.audio, utterances[i].signal.visual);
      visual_hyps[i] = alphabet.decode(decode_system(SystemKind::visual, cfg.eval, s).labels);
    }
  }

  SweepReport report;
  for (std::size_t k = 0; k < cfg.kinds.size(); ++k) {
    for (std::size_t n = 0; n < cfg.snrs.size(); ++n) {
      const NoiseSpec noise{cfg.kinds[k], cfg.snrs[n]};
      std::map<SystemKind, std::pair<ErrorReport, ErrorReport>> acc;
      for (std::size_t i = 0; i < utterances.size(); ++i) {
        const Utterance& u = utterances[i];
        double err = 0.0;
        const Waveform audio = corrupt(u.signal.audio, noise, bank, cfg.seed, i, &err);
        report.max_snr_error_db = std::max(report.max_snr_error_db, err);
        UtteranceStreams streams(models, frontend, audio, u.signal.visual);
        for (SystemKind system : cfg.systems) {
          const std::string hyp =
              system == SystemKind::visual
                  ? *visual_hyps[i]
                  : alphabet.decode(decode_system(system, cfg.eval, streams).labels);
          acc[system].first += word_errors(references[i], hyp);
          acc[system].second += char_errors(references[i], hyp);
        }
      }
      for (SystemKind system : cfg.systems) {
        report.rows.push_back({cfg.kinds[k], cfg.snrs[n], system, acc[system].first.rate(),
                               acc[system].second.rate()});
      }
    }
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const SweepResult& a, const SweepResult& b) {
    if (a.noise != b.noise) return a.noise < b.noise;
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    return system_rank(a.system) < system_rank(b.system);
  });
  return report;
}

std::string sweep_csv(const std::vector<SweepResult>& rows) {
  std::string out = "noise,snr_db,system,wer,cer\n";
  for (const SweepResult& r : rows) {
    out += to_string(r.noise) + "," +
           (r.snr_db == kCleanSnr ? std::string("clean") : format_double(r.snr_db)) + "," +
           to_string(r.system) + "," + format_double(r.wer) + "," + format_double(r.cer) + "\n";
  }
  return out;
}

}  // namespace avsr
