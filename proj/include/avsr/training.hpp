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

// Multi-task training of the hybrid model:
//   loss = alpha * (-log p_ctc) + (1 - alpha) * (-log p_att)
// averaged over the utterances of a mini-batch, with label smoothing on the
// attention targets and waveform-level noise augmentation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "avsr/corpus.hpp"
#include "avsr/decoder.hpp"
#include "avsr/features.hpp"
#include "avsr/models.hpp"

namespace avsr {

enum class OptimizerKind { adadelta, sgd };

struct TrainConfig {
  double ctc_alpha = 0.2;
  double label_smoothing = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 10;
  OptimizerKind optimizer = OptimizerKind::adadelta;
  double learning_rate = 1.0;  // multiplies the Adadelta step; plain step size for SGD
  double lr_decay = 1.0;       // per-epoch learning-rate factor
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-8;
  double momentum = 0.9;
  double grad_clip = 5.0;  // global L2 norm; 0 disables
  std::vector<double> augment_snrs{0.0, 5.0, 10.0, kCleanSnr};
  NoiseKind augment_noise = NoiseKind::babble;
  std::size_t patience = 0;  // epochs without val-loss improvement before stopping; 0 = off
  std::size_t val_beam_width = 4;
  std::uint64_t seed = 1;

  void validate() const;
  void save(const std::string& path) const;
  static TrainConfig load(const std::string& path);
};

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

// (1 - eps) * target + eps / V.
std::vector<double> label_smooth(std::span<const double> target, double eps);

struct TrainingExample {
  std::vector<FeatureSequence> streams;
  std::vector<int> labels;
};

// Gradients in HybridModel::for_each_param order.
using Gradients = std::vector<Matrix>;

struct LossResult {
  double loss = 0.0;  // mean over utterances with a feasible CTC target
  double ctc = 0.0;   // mean CTC NLL over the same utterances
  double att = 0.0;   // mean smoothed attention NLL
  std::size_t used = 0;
  std::size_t infeasible = 0;  // skipped: too few frames for the CTC target
  Gradients grads;             // d loss / d params, empty unless requested
};

LossResult multitask_loss(std::span<const TrainingExample> batch, const HybridModel& model,
                          double alpha, double label_smoothing, bool with_gradients = true);

Gradients zero_gradients(const HybridModel& model);

// Picks clean or one SNR uniformly from cfg.augment_snrs and mixes an
// excerpt of cfg.augment_noise at that SNR. Reports the pick through `snr`.
Waveform augment(const Waveform& w, const TrainConfig& cfg, const NoiseBank& noise, Rng& rng,
                 double* snr = nullptr);

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  // Applies one update scaled by `lr_scale` to the parameters (visited in a
  // fixed order) and returns the pre-clip gradient norm.
  double step(std::span<Matrix* const> params, Gradients& grads, double lr_scale = 1.0);

 private:
  TrainConfig cfg_;
  std::vector<Matrix> acc_grad_;
  std::vector<Matrix> acc_update_;
};

std::vector<Matrix*> parameter_list(HybridModel& model);

struct Utterance {
  std::string id;
  std::vector<int> labels;
  SyntheticUtterance signal;
};

std::vector<Utterance> load_utterances(const std::vector<UtteranceRecord>& records,
                                       const SyntheticVoice& voice);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_cer = 0.0;
  std::size_t infeasible = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  bool diverged = false;  // the model holds the last good parameters
  std::string message;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Trains `model` for `system` (A, V or AV-early). Audio-bearing systems get
// noise augmentation; the visual stream never does.
TrainResult train(HybridModel& model, SystemKind system, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& val_set, const SyntheticVoice& voice,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

std::string metrics_csv(const std::vector<EpochMetrics>& epochs);

// Character error rate of the best joint-decoding hypotheses over a set.
double evaluate_cer(const HybridModel& model, SystemKind system,
                    const std::vector<Utterance>& utterances, const BeamConfig& cfg);

}  // namespace avsr
