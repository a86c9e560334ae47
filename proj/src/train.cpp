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

#include "dialeval/train.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dialeval {

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw DomainError("margin must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw DomainError("decay factor must lie in (0, 1)");
  }
  if (!(initial_lr > 0.0)) throw DomainError("learning rate must be positive");
  if (batch_size < 1 || patience < 1 || early_stop < 1 || max_epochs < 1) {
    throw DomainError("batch size, patience, early-stop window and max epochs must be >= 1");
  }
}

std::vector<TokenTriple<double>> resolve_triples(std::span<const TrainExample> examples,
                                                 const EmbeddingSource& source) {
  const auto resolve = [&](const Utterance& u) {
    try {
      return source.resolve(u.uid, u.tokens);
    } catch (const std::out_of_range& e) {
      throw FormatError(std::string("embedding source does not cover utterance: ") + e.what());
    }
  };
  std::vector<TokenTriple<double>> triples;
  triples.reserve(examples.size());
  for (const TrainExample& ex : examples) {
    triples.push_back({resolve(ex.query), resolve(ex.pos_response), resolve(ex.neg_response)});
  }
  return triples;
}

double dataset_loss(const UnrefModel<double>& model,
                    std::span<const TokenTriple<double>> triples,
                    const LossOptions& options, std::size_t batch_size) {
  if (triples.empty()) throw DomainError("dataset_loss: empty dataset");
  double total = 0.0;
  for (std::size_t start = 0; start < triples.size(); start += batch_size) {
    const auto batch = triples.subspan(start, std::min(batch_size, triples.size() - start));
    total += batch_loss(model, batch, options) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(triples.size());
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  std::span<const TokenTriple<double>> train_set,
                  std::span<const TokenTriple<double>> valid_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty() || valid_set.empty()) {
    throw DomainError("training and validation sets must be non-empty");
  }
  const LossOptions options{model_config.objective, config.margin};

  TrainResult result{init_model<double>(model_config), {}, 0};
  UnrefModel<double>& model = result.model;
  ModelParams<double> best_params = model.params;
  AdamState<double> adam = AdamState<double>::zeros(model_config, config.initial_lr);

  std::vector<TokenTriple<double>> shuffled(train_set.begin(), train_set.end());
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_decay = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(shuffled);
    double train_total = 0.0;
    for (std::size_t start = 0; start < shuffled.size(); start += config.batch_size) {
      const std::span<const TokenTriple<double>> batch(
          shuffled.data() + start, std::min(config.batch_size, shuffled.size() - start));
      GradientResult<double> step = compute_gradients(model, batch, options);
      adam_step(adam, model.params, step.grads);
      train_total += static_cast<double>(step.loss) * static_cast<double>(batch.size());
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_total / static_cast<double>(shuffled.size());
    entry.valid_loss = dataset_loss(model, valid_set, options, config.batch_size);
    entry.lr = adam.lr;
    if (!std::isfinite(entry.train_loss) || !std::isfinite(entry.valid_loss)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
    }

    if (entry.valid_loss < best - config.improvement_tolerance) {
      best = entry.valid_loss;
      best_params = model.params;
      result.best_epoch = epoch;
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      if (++since_decay >= config.patience) {
        adam.lr *= config.decay_factor;
        since_decay = 0;
      }
    }
    entry.best_so_far = best;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (since_best >= config.early_stop) break;
  }
  model.params = std::move(best_params);
  return result;
}

std::string serialize_training_log(std::span<const EpochLog> log) {
  std::string out;
  for (const EpochLog& e : log) {
    const nlohmann::json record = {{"epoch", e.epoch},
                                   {"train_loss", e.train_loss},
                                   {"valid_loss", e.valid_loss},
                                   {"lr", e.lr},
                                   {"best_so_far", e.best_so_far}};
    out += record.dump();
    out += '\n';
  }
  return out;
}

void write_training_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_training_log(log);
}

}  // namespace dialeval
