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

#include "avsr/lm_corpus.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "avsr/config.hpp"
#include "avsr/error.hpp"
#include "avsr/tape.hpp"

namespace avsr {

TextCorpus build_lm_corpus(const std::vector<std::vector<UtteranceRecord>>& manifests,
                           const Alphabet& alphabet, const LmCorpusConfig& cfg) {
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
    throw UsageError("validation fraction must lie in [0, 1)");
  }
  std::vector<std::vector<int>> all;
  std::set<std::string> seen;
  for (const auto& manifest : manifests) {
    for (const UtteranceRecord& r : manifest) {
      if (cfg.deduplicate && !seen.insert(r.text).second) continue;
      std::vector<int> seq = alphabet.encode(r.text);
      if (seq.empty()) throw UsageError("utterance " + r.id + " has an empty transcript");
      all.push_back(std::move(seq));
    }
  }
  Rng rng(cfg.seed);
  rng.shuffle(all);
  TextCorpus c;
  c.alphabet = alphabet;
  const auto n_val = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(all.size())));
  c.validation.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  c.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  return c;
}

double perplexity(const LmParams& lm, const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) throw UsageError("perplexity of an empty set");
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& s : sequences) {
    nll -= lm_sequence_log_prob(s, lm);
    count += s.size() + 1;
  }
  return std::exp(nll / static_cast<double>(count));
}

double lm_batch_loss(const LmParams& lm, const std::vector<const std::vector<int>*>& batch,
                     std::vector<Matrix>* grads) {
  std::size_t count = 0;
  for (const auto* s : batch) count += s->size() + 1;
  if (count == 0) throw UsageError("empty LM batch");
  std::unordered_map<const Matrix*, std::size_t> slot;
  if (grads) {
    grads->clear();
    lm.for_each_param([&](const std::string&, const Matrix& m) {
      slot[&m] = grads->size();
      grads->emplace_back(m.rows(), m.cols());
    });
  }
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(count);
  for (const auto* s : batch) {
    ad::Tape tape(grads != nullptr);
    ad::Var nll = graph::lm_nll(tape, *s, lm);
    loss += nll.scalar() * scale;
    if (grads) {
      tape.backward(ad::scale(nll, scale));
      tape.for_each_param_grad([&](const Matrix& storage, const Matrix& g) {
        (*grads)[slot.at(&storage)] += g;
      });
    }
  }
  return loss;
}

LmTrainResult train_lm(LmParams& lm, const TextCorpus& corpus, const LmTrainConfig& cfg,
                       const std::function<void(const LmEpochMetrics&)>& on_epoch) {
  if (corpus.train.empty()) throw TrainingError("LM training corpus is empty");
  if (!(corpus.alphabet == lm.alphabet)) throw UsageError("corpus and LM alphabets differ");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  TrainConfig opt_cfg;
  opt_cfg.optimizer = cfg.optimizer;
  opt_cfg.learning_rate = cfg.learning_rate;
  opt_cfg.grad_clip = cfg.grad_clip;
  Optimizer optimizer(opt_cfg);
  std::vector<Matrix*> params;
  lm.for_each_param([&params](const std::string&, Matrix& m) { params.push_back(&m); });
  auto snapshot = [&params] {
    std::vector<Matrix> s;
    for (const Matrix* p : params) s.push_back(*p);
    return s;
  };
  std::vector<Matrix> last_good = snapshot();
  LmTrainResult result;
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite; start += cfg.batch_size) {
      std::vector<const std::vector<int>*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(&corpus.train[order[i]]);
      }
      std::vector<Matrix> grads;
      const double loss = lm_batch_loss(lm, batch, &grads);
      finite = std::isfinite(loss);
      for (const Matrix& g : grads) finite = finite && g.all_finite();
      if (!finite) break;
      loss_sum += loss;
      ++batches;
      optimizer.step(params, grads);
    }
    LmEpochMetrics m;
    m.epoch = epoch;
    m.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    m.val_perplexity = corpus.validation.empty() ? 0.0 : perplexity(lm, corpus.validation);
    if (!finite || !std::isfinite(m.val_perplexity)) {
      for (std::size_t i = 0; i < params.size(); ++i) *params[i] = last_good[i];
      result.diverged = true;
      result.message = "non-finite LM loss in epoch " + std::to_string(epoch);
      return result;
    }
    last_good = snapshot();
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

std::string lm_metrics_csv(const std::vector<LmEpochMetrics>& epochs) {
  std::string out = "epoch,train_loss,val_perplexity\n";
  for (const LmEpochMetrics& m : epochs) {
    out += std::to_string(m.epoch) + "," + format_double(m.train_loss) + "," +
           format_double(m.val_perplexity) + "\n";
  }
  return out;
}

}  // namespace avsr
