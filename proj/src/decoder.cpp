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

#include "avsr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "avsr/config.hpp"
#include "avsr/error.hpp"

namespace avsr {
namespace {

bool stream_uses_att(const BeamConfig& c) { return c.ctc_weight != 1.0; }
bool stream_uses_ctc(const BeamConfig& c) { return c.ctc_weight != 0.0; }
bool stream_uses_lm(const BeamConfig& c) { return c.lm_weight != 0.0; }

// Everything one parent hypothesis needs to score its children in a stream.
struct Expansion {
  std::vector<CtcExtension> ctc;
  AttentionState att;
  std::vector<LogProb> att_log_probs;
  LmState lm;
  std::vector<LogProb> lm_log_probs;
};

struct StreamContext {
  const DecodeStream* stream = nullptr;
  const BeamConfig* cfg = nullptr;
  double weight = 0.0;
  AttentionMemory memory;
};

StreamHypothesisState initial_state(const StreamContext& ctx) {
  StreamHypothesisState s;
  const DecodeStream& st = *ctx.stream;
  if (stream_uses_ctc(*ctx.cfg)) s.ctc = ctc_prefix_init(st.lattice);
  if (stream_uses_att(*ctx.cfg)) {
    s.att = initial_attention_state(st.states.num_frames(), st.model->decoder);
  }
  if (stream_uses_lm(*ctx.cfg)) s.lm = lm_initial_state(*st.lm);
  return s;
}

Expansion expand(const StreamContext& ctx, const StreamHypothesisState& parent, int prev) {
  Expansion e;
  const DecodeStream& st = *ctx.stream;
  if (stream_uses_ctc(*ctx.cfg)) e.ctc = ctc_prefix_extend_all(parent.ctc, st.lattice);
  if (stream_uses_att(*ctx.cfg)) {
    AttentionResult ar = attention_step(parent.att, ctx.memory, st.model->decoder);
    DecoderOutput out =
        decoder_step(ar.state, prev, ar.context, st.model->decoder, st.model->alphabet);
    e.att = std::move(out.state);
    e.att_log_probs = std::move(out.log_probs);
  }
  if (stream_uses_lm(*ctx.cfg)) {
    LmOutput out = lm_step(parent.lm, prev, *st.lm);
    e.lm = std::move(out.state);
    e.lm_log_probs = std::move(out.log_probs);
  }
  return e;
}

StreamScores child_scores(const StreamScores& parent, const Expansion& e, std::size_t slot) {
  StreamScores s = parent;
  if (!e.ctc.empty()) s.ctc = e.ctc[slot].score;
  if (!e.att_log_probs.empty()) s.att = parent.att + e.att_log_probs[slot];
  if (!e.lm_log_probs.empty()) s.lm = parent.lm + e.lm_log_probs[slot];
  return s;
}

LogProb fused_score(std::span<const StreamContext> ctx, std::span<const StreamScores> scores) {
  LogProb total = 0.0;
  for (std::size_t s = 0; s < ctx.size(); ++s) {
    if (ctx[s].weight == 0.0) continue;
    total += weighted(ctx[s].weight, joint_score(scores[s], *ctx[s].cfg));
  }
  return total;
}

// Sequence order used for tie-breaking; ids compare numerically, so eos
// sorts after every label.
bool sequence_less(std::span<const int> a, std::span<const int> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool result_before(const DecodeResult& a, const DecodeResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return sequence_less(a.labels, b.labels);
}

struct Candidate {
  std::size_t parent = 0;
  std::size_t slot = 0;
  std::vector<int> sequence;  // parent prefix + symbol id
  LogProb score = kLogZero;
  std::vector<StreamScores> scores;
};

}  // namespace

void BeamConfig::validate() const {
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) {
    throw UsageError("ctc weight must lie in [0, 1]");
  }
  if (!(lm_weight >= 0.0) || !std::isfinite(lm_weight)) {
    throw UsageError("lm weight must be finite and non-negative");
  }
  if (beam_width == 0) throw UsageError("beam width must be at least 1");
  if (!(min_symbol_seconds > 0.0)) throw UsageError("min symbol duration must be positive");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::early: return "early";
    case FusionMode::late: return "late";
    case FusionMode::late_rescore: return "late-rescore";
  }
  return "early";
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "early") return FusionMode::early;
  if (name == "late") return FusionMode::late;
  if (name == "late-rescore") return FusionMode::late_rescore;
  throw UsageError("unknown fusion mode '" + name + "' (expected early, late or late-rescore)");
}

DecodeStream prepare_stream(const HybridModel& model, std::span<const FeatureSequence> streams,
                            const LmParams* lm) {
  DecodeStream s;
  s.model = &model;
  s.lm = lm;
  s.states = encode(streams, model.encoder);
  s.lattice = ctc_lattice(s.states, model);
  return s;
}

LogProb joint_score(const StreamScores& s, const BeamConfig& cfg) {
  return weighted(cfg.ctc_weight, s.ctc) + weighted(1.0 - cfg.ctc_weight, s.att) +
         weighted(cfg.lm_weight, s.lm);
}

LogProb joint_score(const Hypothesis& h, const BeamConfig& cfg) {
  if (h.streams.size() != 1) throw UsageError("joint_score needs a single-stream hypothesis");
  return joint_score(h.streams.front().scores, cfg);
}

std::size_t derive_max_output_len(const BeamConfig& cfg, std::size_t frames, double fps) {
  if (cfg.max_output_len > 0) return cfg.max_output_len;
  const double per_symbol = cfg.min_symbol_seconds * fps;
  const auto len = static_cast<std::size_t>(std::ceil(1.5 * static_cast<double>(frames) / per_symbol));
  return std::max<std::size_t>(len, 1);
}

std::vector<DecodeResult> fused_beam_search(std::span<const DecodeStream> streams,
                                            std::span<const BeamConfig> configs,
                                            std::span<const double> weights) {
  if (streams.empty() || streams.size() != configs.size() || streams.size() != weights.size()) {
    throw UsageError("fused_beam_search needs one config and weight per stream");
  }
  const Alphabet& alphabet = streams.front().model->alphabet;
  std::vector<StreamContext> ctx(streams.size());
  std::size_t max_len = 0;
  bool any_active = false;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const DecodeStream& st = streams[s];
    configs[s].validate();
    if (!st.model) throw UsageError("decode stream has no model");
    if (!(st.model->alphabet == alphabet)) {
      throw UsageError("streams use different alphabets");
    }
    if (!(weights[s] >= 0.0)) throw UsageError("stream weights must be non-negative");
    ctx[s] = {&st, &configs[s], weights[s], {}};
    if (weights[s] == 0.0) continue;
    if (st.states.num_frames() == 0 || st.lattice.frames() == 0) {
      throw UsageError("empty encoder output");
    }
    if (stream_uses_lm(configs[s]) && !st.lm) {
      throw UsageError("lm weight is non-zero but no language model was given");
    }
    if (stream_uses_lm(configs[s]) && !(st.lm->alphabet == alphabet)) {
      throw UsageError("language model alphabet differs from the recognizer's");
    }
    if (stream_uses_att(configs[s])) ctx[s].memory = make_attention_memory(st.states, st.model->decoder);
    const std::size_t len = configs.front().max_output_len > 0
                                ? configs.front().max_output_len
                                : derive_max_output_len(configs[s], st.states.num_frames(),
                                                        st.states.fps);
    max_len = any_active ? std::min(max_len, len) : len;
    any_active = true;
  }
  if (!any_active) throw UsageError("every stream has weight 0");
  const std::size_t width = configs.front().beam_width;
  const std::size_t slots = alphabet.output_size();
  const std::size_t eos_slot = alphabet.output_slot(alphabet.eos_id());

  Hypothesis root;
  for (const StreamContext& c : ctx) {
    root.streams.push_back(c.weight == 0.0 ? StreamHypothesisState{} : initial_state(c));
  }
  std::vector<Hypothesis> live{std::move(root)};
  std::vector<DecodeResult> finished;

  for (std::size_t step = 0; step <= max_len && !live.empty(); ++step) {
    const bool force_eos = step == max_len;
    std::vector<std::vector<Expansion>> expansions(live.size());
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const Hypothesis& parent = live[p];
      const int prev = parent.prefix.empty() ? alphabet.sos_id() : parent.prefix.back();
      expansions[p].resize(ctx.size());
      for (std::size_t s = 0; s < ctx.size(); ++s) {
        if (ctx[s].weight != 0.0) expansions[p][s] = expand(ctx[s], parent.streams[s], prev);
      }
      for (std::size_t k = force_eos ? eos_slot : 0; k < slots; ++k) {
        Candidate c;
        c.parent = p;
        c.slot = k;
        c.scores.resize(ctx.size());
        for (std::size_t s = 0; s < ctx.size(); ++s) {
          if (ctx[s].weight != 0.0) {
            c.scores[s] = child_scores(parent.streams[s].scores, expansions[p][s], k);
          }
        }
        c.score = fused_score(ctx, c.scores);
        if (c.score == kLogZero || std::isnan(c.score)) continue;
        c.sequence = parent.prefix;
        c.sequence.push_back(alphabet.output_id(k));
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return sequence_less(a.sequence, b.sequence);
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Candidate& c = candidates[i];
      if (c.slot == eos_slot) {
        c.sequence.pop_back();
        finished.push_back({std::move(c.sequence), c.score, std::move(c.scores)});
        continue;
      }
      Hypothesis h;
      h.prefix = std::move(c.sequence);
      h.score = c.score;
      h.streams.resize(ctx.size());
      for (std::size_t s = 0; s < ctx.size(); ++s) {
        if (ctx[s].weight == 0.0) continue;
        const Expansion& e = expansions[c.parent][s];
        StreamHypothesisState& hs = h.streams[s];
        hs.scores = c.scores[s];
        if (!e.ctc.empty()) hs.ctc = e.ctc[c.slot].state;
        if (!e.att_log_probs.empty()) hs.att = e.att;
        if (!e.lm_log_probs.empty()) hs.lm = e.lm;
      }
      next.push_back(std::move(h));
    }
    live = std::move(next);
    // Every score term is non-increasing along a path, so a live hypothesis
    // can never overtake a finished one that already beats it.
    if (!finished.empty() && !live.empty()) {
      LogProb best_finished = kLogZero;
      for (const DecodeResult& r : finished) best_finished = std::max(best_finished, r.score);
      LogProb best_live = kLogZero;
      for (const Hypothesis& h : live) best_live = std::max(best_live, h.score);
      if (best_live <= best_finished) break;
    }
  }
  std::sort(finished.begin(), finished.end(), result_before);
  return finished;
}

std::vector<DecodeResult> beam_search(const DecodeStream& stream, const BeamConfig& cfg) {
  const double weight = 1.0;
  return fused_beam_search(std::span<const DecodeStream>(&stream, 1),
                           std::span<const BeamConfig>(&cfg, 1), std::span<const double>(&weight, 1));
}

StreamScores score_sequence(const DecodeStream& stream, std::span<const int> labels) {
  const HybridModel& model = *stream.model;
  const Alphabet& alphabet = model.alphabet;
  StreamScores scores;
  CtcPrefixState ctc = ctc_prefix_init(stream.lattice);
  const AttentionMemory memory = make_attention_memory(stream.states, model.decoder);
  AttentionState att = initial_attention_state(stream.states.num_frames(), model.decoder);
  LmState lm;
  if (stream.lm) lm = lm_initial_state(*stream.lm);
  int prev = alphabet.sos_id();
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const int symbol = i < labels.size() ? labels[i] : alphabet.eos_id();
    if (i < labels.size() && !alphabet.is_label(symbol)) {
      throw UsageError("sequence holds a non-label id");
    }
    const std::size_t slot = alphabet.output_slot(symbol);
    CtcExtension ext = ctc_prefix_extend(ctc, i < labels.size() ? symbol : kCtcEnd, stream.lattice);
    scores.ctc = ext.score;
    ctc = std::move(ext.state);
    AttentionResult ar = attention_step(att, memory, model.decoder);
    DecoderOutput out = decoder_step(ar.state, prev, ar.context, model.decoder, alphabet);
    scores.att += out.log_probs[slot];
    att = std::move(out.state);
    if (stream.lm) {
      LmOutput lo = lm_step(lm, prev, *stream.lm);
      scores.lm += lo.log_probs[slot];
      lm = std::move(lo.state);
    }
    prev = symbol;
  }
  return scores;
}

std::vector<DecodeResult> late_fusion_search(const DecodeStream& audio, const DecodeStream& visual,
                                             const BeamConfig& audio_cfg,
                                             const BeamConfig& visual_cfg,
                                             const FusionConfig& fusion) {
  if (!(fusion.gamma >= 0.0 && fusion.gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
  if (!audio.model || !visual.model || !(audio.model->alphabet == visual.model->alphabet)) {
    throw UsageError("audio and visual models use different alphabets");
  }
  const DecodeStream streams[2] = {audio, visual};
  const BeamConfig configs[2] = {audio_cfg, visual_cfg};
  const double weights[2] = {fusion.gamma, 1.0 - fusion.gamma};
  if (fusion.mode != FusionMode::late_rescore) return fused_beam_search(streams, configs, weights);

  std::set<std::vector<int>> pool;
  for (std::size_t s = 0; s < 2; ++s) {
    if (weights[s] == 0.0) continue;
    for (DecodeResult& r : beam_search(streams[s], configs[s])) pool.insert(std::move(r.labels));
  }
  std::vector<DecodeResult> out;
  for (const std::vector<int>& labels : pool) {
    DecodeResult r;
    r.labels = labels;
    r.streams.resize(2);
    r.score = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
      if (weights[s] == 0.0) continue;
      r.streams[s] = score_sequence(streams[s], labels);
      r.score += weighted(weights[s], joint_score(r.streams[s], configs[s]));
    }
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), result_before);
  return out;
}

std::string format_decode_record(const std::string& id, const Alphabet& alphabet,
                                 const DecodeResult& result) {
  std::string line = id + "\t" + alphabet.decode(result.labels) + "\t" + format_double(result.score);
  for (const StreamScores& s : result.streams) {
    line += "\t" + format_double(s.ctc) + "\t" + format_double(s.att) + "\t" + format_double(s.lm);
  }
  return line;
}

}  // namespace avsr
