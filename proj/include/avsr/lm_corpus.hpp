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

// Character-level LM data preparation and training.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avsr/corpus.hpp"
#include "avsr/models.hpp"
#include "avsr/training.hpp"

namespace avsr {

struct TextCorpus {
  Alphabet alphabet;
  std::vector<std::vector<int>> train;
  std::vector<std::vector<int>> validation;

  std::size_t size() const { return train.size() + validation.size(); }
};

struct LmCorpusConfig {
  double validation_fraction = 0.1;
  bool deduplicate = false;  // duplicate transcripts are kept by default
  std::uint64_t seed = 1;
};

// Concatenates the transcripts of every manifest, shuffles them with the
// seed and splits off the validation fraction.
TextCorpus build_lm_corpus(const std::vector<std::vector<UtteranceRecord>>& manifests,
                           const Alphabet& alphabet, const LmCorpusConfig& cfg = {});

struct LmTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 10;
  OptimizerKind optimizer = OptimizerKind::adadelta;
  double learning_rate = 1.0;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;
};

// exp(mean next-symbol NLL), counting eos as a prediction.
double perplexity(const LmParams& lm, const std::vector<std::vector<int>>& sequences);

struct LmEpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean NLL per predicted symbol
  double val_perplexity = 0.0;
};

struct LmTrainResult {
  std::vector<LmEpochMetrics> epochs;
  bool diverged = false;  // the LM holds the last good parameters
  std::string message;
};

// Mean per-symbol NLL of a batch and, when requested, its gradients in
// LmParams::for_each_param order.
double lm_batch_loss(const LmParams& lm, const std::vector<const std::vector<int>*>& batch,
                     std::vector<Matrix>* grads);

LmTrainResult train_lm(LmParams& lm, const TextCorpus& corpus, const LmTrainConfig& cfg,
                       const std::function<void(const LmEpochMetrics&)>& on_epoch = {});

std::string lm_metrics_csv(const std::vector<LmEpochMetrics>& epochs);

}  // namespace avsr
