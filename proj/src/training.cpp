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

#include "avsr/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "avsr/config.hpp"
#include "avsr/error.hpp"
#include "avsr/scoring.hpp"
#include "avsr/tape.hpp"

namespace avsr {
namespace {

const std::vector<std::string> kTrainKeys = {
    "ctc_alpha",    "label_smoothing", "epochs",       "batch_size",   "optimizer",
    "learning_rate", "lr_decay",       "adadelta_rho", "adadelta_eps", "momentum",
    "grad_clip",    "augment_snrs",    "augment_noise", "patience",    "val_beam_width",
    "seed"};

std::string join_snrs(const std::vector<double>& snrs) {
  std::string out;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    if (i) out += ",";
    out += snrs[i] == kCleanSnr ? std::string("clean") : format_double(snrs[i]);
  }
  return out;
}

std::vector<double> parse_snrs(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "clean") {
      out.push_back(kCleanSnr);
    } else {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("bad SNR '" + item + "' in augment_snrs");
      }
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(ctc_alpha >= 0.0 && ctc_alpha <= 1.0)) throw ConfigError("ctc_alpha must lie in [0, 1]");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (augment_snrs.empty()) throw ConfigError("augment_snrs must not be empty");
  for (double s : augment_snrs) {
    if (std::isnan(s) || s == -kCleanSnr) throw ConfigError("augment SNRs must be finite or clean");
  }
  if (val_beam_width == 0) throw ConfigError("val_beam_width must be positive");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adadelta ? "adadelta" : "sgd";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adadelta") return OptimizerKind::adadelta;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adadelta or sgd)");
}

void TrainConfig::save(const std::string& path) const {
  KeyValueFile kv;
  kv.set("ctc_alpha", ctc_alpha);
  kv.set("label_smoothing", label_smoothing);
  kv.set("epochs", static_cast<double>(epochs));
  kv.set("batch_size", static_cast<double>(batch_size));
  kv.set("optimizer", to_string(optimizer));
  kv.set("learning_rate", learning_rate);
  kv.set("lr_decay", lr_decay);
  kv.set("adadelta_rho", adadelta_rho);
  kv.set("adadelta_eps", adadelta_eps);
  kv.set("momentum", momentum);
  kv.set("grad_clip", grad_clip);
  kv.set("augment_snrs", join_snrs(augment_snrs));
  kv.set("augment_noise", to_string(augment_noise));
  kv.set("patience", static_cast<double>(patience));
  kv.set("val_beam_width", static_cast<double>(val_beam_width));
  kv.set("seed", std::to_string(seed));
  kv.write(path);
}

TrainConfig TrainConfig::load(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::read(path);
  kv.require_known(kTrainKeys);
  TrainConfig c;
  if (kv.has("ctc_alpha")) c.ctc_alpha = kv.get_double("ctc_alpha");
  if (kv.has("label_smoothing")) c.label_smoothing = kv.get_double("label_smoothing");
  if (kv.has("epochs")) c.epochs = static_cast<std::size_t>(kv.get_int("epochs"));
  if (kv.has("batch_size")) c.batch_size = static_cast<std::size_t>(kv.get_int("batch_size"));
  if (kv.has("optimizer")) c.optimizer = parse_optimizer(kv.get("optimizer"));
  if (kv.has("learning_rate")) c.learning_rate = kv.get_double("learning_rate");
  if (kv.has("lr_decay")) c.lr_decay = kv.get_double("lr_decay");
  if (kv.has("adadelta_rho")) c.adadelta_rho = kv.get_double("adadelta_rho");
  if (kv.has("adadelta_eps")) c.adadelta_eps = kv.get_double("adadelta_eps");
  if (kv.has("momentum")) c.momentum = kv.get_double("momentum");
  if (kv.has("grad_clip")) c.grad_clip = kv.get_double("grad_clip");
  if (kv.has("augment_snrs")) c.augment_snrs = parse_snrs(kv.get("augment_snrs"));
  if (kv.has("augment_noise")) c.augment_noise = parse_noise_kind(kv.get("augment_noise"));
  if (kv.has("patience")) c.patience = static_cast<std::size_t>(kv.get_int("patience"));
  if (kv.has("val_beam_width")) {
    c.val_beam_width = static_cast<std::size_t>(kv.get_int("val_beam_width"));
  }
  if (kv.has("seed")) c.seed = std::stoull(kv.get("seed"));
  c.validate();
  return c;
}

std::vector<double> label_smooth(std::span<const double> target, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw UsageError("label smoothing must lie in [0, 1)");
  if (target.empty()) throw UsageError("empty target distribution");
  const double uniform = eps / static_cast<double>(target.size());
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) out[i] = (1.0 - eps) * target[i] + uniform;
  return out;
}

Gradients zero_gradients(const HybridModel& model) {
  Gradients g;
  model.for_each_param([&g](const std::string&, const Matrix& m) {
    g.emplace_back(m.rows(), m.cols());
  });
  return g;
}

std::vector<Matrix*> parameter_list(HybridModel& model) {
  std::vector<Matrix*> out;
  model.for_each_param([&out](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

LossResult multitask_loss(std::span<const TrainingExample> batch, const HybridModel& model,
                          double alpha, double label_smoothing, bool with_gradients) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (batch.empty()) throw UsageError("empty batch");
  LossResult r;
  std::unordered_map<const Matrix*, std::size_t> slot;
  if (with_gradients) {
    r.grads = zero_gradients(model);
    std::size_t i = 0;
    model.for_each_param([&](const std::string&, const Matrix& m) { slot[&m] = i++; });
  }
  // Feasibility is checked first so every term is scaled by the final count.
  std::vector<char> feasible(batch.size(), 0);
  for (std::size_t u = 0; u < batch.size(); ++u) {
    const std::size_t frames = batch[u].streams.empty() ? 0 : batch[u].streams[0].num_frames();
    feasible[u] = frames >= ctc_min_frames(batch[u].labels) ? 1 : 0;
    if (feasible[u]) ++r.used;
  }
  r.infeasible = batch.size() - r.used;
  if (r.used == 0) {
    throw TrainingError("every utterance in the batch has a CTC target longer than its input (" +
                        std::to_string(batch.size()) + " utterances)");
  }
  const double n = static_cast<double>(r.used);
  for (std::size_t u = 0; u < batch.size(); ++u) {
    if (!feasible[u]) continue;
    const TrainingExample& ex = batch[u];
    ad::Tape tape(with_gradients);
    ad::Var h = graph::encoder(tape, ex.streams, model.encoder);
    bool ok = false;
    ad::Var ctc = ad::ctc_nll(graph::ctc_logits(h, model), ex.labels, &ok);
    ad::Var att = graph::attention_nll(graph::attention_memory(h, model.decoder), ex.labels,
                                       label_smoothing, model);
    const ad::Var terms[2] = {ad::scale(ctc, alpha), ad::scale(att, 1.0 - alpha)};
    ad::Var total = ad::add_scalars(terms);
    r.loss += total.scalar() / n;
    r.ctc += ctc.scalar() / n;
    r.att += att.scalar() / n;
    if (with_gradients) {
      tape.backward(ad::scale(total, 1.0 / n));
      tape.for_each_param_grad([&](const Matrix& storage, const Matrix& g) {
        r.grads[slot.at(&storage)] += g;
      });
    }
  }
  return r;
}

Waveform augment(const Waveform& w, const TrainConfig& cfg, const NoiseBank& noise, Rng& rng,
                 double* snr) {
  if (cfg.augment_snrs.empty()) throw UsageError("no augmentation levels configured");
  const double pick = cfg.augment_snrs[rng.index(cfg.augment_snrs.size())];
  if (snr) *snr = pick;
  if (pick == kCleanSnr) return w;
  return mix_at_snr(w, noise.excerpt(cfg.augment_noise, w.samples.size(), rng), pick);
}

double Optimizer::step(std::span<Matrix* const> params, Gradients& grads, double lr_scale) {
  if (params.size() != grads.size()) throw UsageError("gradient count does not match parameters");
  double norm2 = 0.0;
  for (const Matrix& g : grads) norm2 += squared_norm(g.values());
  const double norm = std::sqrt(norm2);
  if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) {
    const double s = cfg_.grad_clip / norm;
    for (Matrix& g : grads) g *= s;
  }
  if (acc_grad_.empty()) {
    for (const Matrix& g : grads) {
      acc_grad_.emplace_back(g.rows(), g.cols());
      acc_update_.emplace_back(g.rows(), g.cols());
    }
  }
  const double lr = cfg_.learning_rate * lr_scale;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto theta = params[p]->values();
    auto g = grads[p].values();
    auto eg = acc_grad_[p].values();
    auto ex = acc_update_[p].values();
    if (cfg_.optimizer == OptimizerKind::adadelta) {
      const double rho = cfg_.adadelta_rho;
      const double eps = cfg_.adadelta_eps;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        if (g[i] == 0.0 && eg[i] == 0.0) continue;
        eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
        const double delta = -std::sqrt(ex[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
        ex[i] = rho * ex[i] + (1.0 - rho) * delta * delta;
        theta[i] += lr * delta;
      }
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        eg[i] = cfg_.momentum * eg[i] + g[i];
        theta[i] -= lr * eg[i];
      }
    }
  }
  return norm;
}

std::vector<Utterance> load_utterances(const std::vector<UtteranceRecord>& records,
                                       const SyntheticVoice& voice) {
  const Alphabet alphabet = voice.config().make_alphabet();
  std::vector<Utterance> out;
  out.reserve(records.size());
  for (const UtteranceRecord& r : records) {
    out.push_back({r.id, alphabet.encode(r.text), render(r, voice)});
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
  std::string out = "epoch,train_loss,val_loss,val_cer\n";
  for (const EpochMetrics& m : epochs) {
    out += std::to_string(m.epoch) + "," + format_double(m.train_loss) + "," +
           format_double(m.val_loss) + "," + format_double(m.val_cer) + "\n";
  }
  return out;
}

double evaluate_cer(const HybridModel& model, SystemKind system,
                    const std::vector<Utterance>& utterances, const BeamConfig& cfg) {
  ErrorReport total;
  if (utterances.empty()) return 0.0;
  const Frontend fe(utterances.front().signal.audio.sample_rate);
  for (const Utterance& u : utterances) {
    const auto streams = fe(system, u.signal.audio, u.signal.visual);
    const DecodeStream ds = prepare_stream(model, streams);
    const auto results = beam_search(ds, cfg);
    const std::string hyp = results.empty() ? std::string() : model.alphabet.decode(results[0].labels);
    total += char_errors(model.alphabet.decode(u.labels), hyp);
  }
  return total.reference_length ? total.rate() : 0.0;
}

TrainResult train(HybridModel& model, SystemKind system, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& val_set, const SyntheticVoice& voice,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw TrainingError("training set is empty");
  if (system == SystemKind::av_late) {
    throw UsageError("AV-late is trained as separate A and V models");
  }
  const double sample_rate = train_set.front().signal.audio.sample_rate;
  const Frontend frontend(sample_rate);
  const NoiseBank noise(voice, derive_seed(cfg.seed, 0x6e6f697365ull));
  const bool uses_audio = system != SystemKind::visual;
  const std::vector<Matrix*> params = parameter_list(model);
  Optimizer optimizer(cfg);
  BeamConfig val_beam;
  val_beam.beam_width = cfg.val_beam_width;

  auto snapshot = [&params] {
    std::vector<Matrix> s;
    for (const Matrix* p : params) s.push_back(*p);
    return s;
  };
  auto restore = [&params](const std::vector<Matrix>& s) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = s[i];
  };

  TrainResult result;
  std::vector<Matrix> last_good = snapshot();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(order);
    EpochMetrics m;
    m.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    const double lr_scale = std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<TrainingExample> batch;
      for (std::size_t i = start; i < end; ++i) {
        const Utterance& u = train_set[order[i]];
        const Waveform audio =
            uses_audio ? augment(u.signal.audio, cfg, noise, rng) : u.signal.audio;
        batch.push_back({frontend(system, audio, u.signal.visual), u.labels});
      }
      LossResult lr;
      try {
        lr = multitask_loss(batch, model, cfg.ctc_alpha, cfg.label_smoothing);
      } catch (const TrainingError&) {
        m.infeasible += batch.size();
        continue;
      }
      m.infeasible += lr.infeasible;
      bool finite = std::isfinite(lr.loss);
      for (const Matrix& g : lr.grads) finite = finite && g.all_finite();
      if (!finite) {
        restore(last_good);
        result.diverged = true;
        result.message = "non-finite loss in epoch " + std::to_string(epoch);
        return result;
      }
      loss_sum += lr.loss * static_cast<double>(lr.used);
      loss_count += lr.used;
      optimizer.step(params, lr.grads, lr_scale);
    }
    m.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;

    if (!val_set.empty()) {
      double val_sum = 0.0;
      std::size_t val_count = 0;
      for (const Utterance& u : val_set) {
        const TrainingExample ex{frontend(system, u.signal.audio, u.signal.visual), u.labels};
        try {
          const LossResult vr = multitask_loss(std::span<const TrainingExample>(&ex, 1), model,
                                               cfg.ctc_alpha, cfg.label_smoothing, false);
          val_sum += vr.loss;
          ++val_count;
        } catch (const TrainingError&) {
        }
      }
      m.val_loss = val_count ? val_sum / static_cast<double>(val_count) : 0.0;
      m.val_cer = evaluate_cer(model, system, val_set, val_beam);
    }
    if (!std::isfinite(m.train_loss) || !std::isfinite(m.val_loss)) {
      restore(last_good);
      result.diverged = true;
      result.message = "non-finite loss in epoch " + std::to_string(epoch);
      return result;
    }
    last_good = snapshot();
    result.epochs.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
    if (cfg.patience > 0 && !val_set.empty()) {
      if (m.val_loss < best_val) {
        best_val = m.val_loss;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace avsr
