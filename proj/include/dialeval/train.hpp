// Copyright 2026 The dialeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dialeval/corpus.hpp"
#include "dialeval/embedding_io.hpp"
#include "dialeval/model.hpp"

namespace dialeval {

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  double margin = 0.5;
  double initial_lr = 1e-4;
  double decay_factor = 0.5;
  int patience = 5;          // epochs without improvement before decaying lr
  int early_stop = 20;       // epochs without improvement before stopping
  int max_epochs = 200;
  double improvement_tolerance = 1e-6;

  /// Throws DomainError when a field is out of range.
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
  double best_so_far = 0.0;
};

struct TrainResult {
  UnrefModel<double> model;  // parameters from the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Resolves every utterance of every triple to a token matrix.
std::vector<TokenTriple<double>> resolve_triples(std::span<const TrainExample> examples,
                                                 const EmbeddingSource& source);

/// Mean loss over `triples`, evaluated in batches of `batch_size`.
double dataset_loss(const UnrefModel<double>& model,
                    std::span<const TokenTriple<double>> triples,
                    const LossOptions& options, std::size_t batch_size);

/// Adam with seeded shuffling; the learning rate is multiplied by
/// `decay_factor` after `patience` epochs without a new validation minimum,
/// and training stops after `early_stop` such epochs or `max_epochs`.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  std::span<const TokenTriple<double>> train_set,
                  std::span<const TokenTriple<double>> valid_set,
                  const EpochCallback& on_epoch = {});

std::string serialize_training_log(std::span<const EpochLog> log);
void write_training_log(std::span<const EpochLog> log, const std::filesystem::path& path);

}  // namespace dialeval
