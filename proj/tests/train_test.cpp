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

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace dialeval {
namespace {

using testing::random_matrix;

ModelConfig small_config(EncoderKind encoder, Objective objective) {
  ModelConfig c;
  c.encoder = encoder;
  c.objective = objective;
  c.embedding = EmbeddingKind::kStatic;
  c.input_dim = 4;
  c.gru_hidden = 3;
  c.gru_layers = 1;
  c.mlp_hidden = {6, 6, 4};
  c.seed = 5;
  return c;
}

// Positives and negatives are drawn from the same distribution.
std::vector<TokenTriple<double>> no_signal(std::size_t count, Rng& rng) {
  std::vector<TokenTriple<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({random_matrix(4, 3, rng), random_matrix(4, 3, rng), random_matrix(4, 3, rng)});
  }
  return out;
}

// The positive shares the query's direction; the negative points away.
std::vector<TokenTriple<double>> separable(std::size_t count, Rng& rng) {
  std::vector<TokenTriple<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const MatrixXd q = random_matrix(4, 1, rng);
    out.push_back({q, q + random_matrix(4, 1, rng, 0.1), -q + random_matrix(4, 1, rng, 0.1)});
  }
  return out;
}

TrainConfig quick_config() {
  TrainConfig t;
  t.seed = 17;
  t.batch_size = 16;
  t.initial_lr = 1e-2;
  t.max_epochs = 300;
  return t;
}

// Replays the decay/stop rule over the logged validation losses.
void expect_schedule_consistent(const TrainResult& r, const TrainConfig& t) {
  double best = std::numeric_limits<double>::infinity();
  double lr = t.initial_lr;
  int best_epoch = 0, since_best = 0, since_decay = 0;
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    const EpochLog& e = r.log[i];
    EXPECT_EQ(e.epoch, static_cast<int>(i) + 1);
    EXPECT_EQ(e.lr, lr) << "epoch " << e.epoch;
    if (e.valid_loss < best - t.improvement_tolerance) {
      best = e.valid_loss;
      best_epoch = e.epoch;
      since_best = since_decay = 0;
    } else {
      ++since_best;
      if (++since_decay == t.patience) {
        lr *= t.decay_factor;
        since_decay = 0;
      }
    }
    EXPECT_EQ(e.best_so_far, best);
    const bool last = i + 1 == r.log.size();
    EXPECT_EQ(last, since_best == t.early_stop || e.epoch == t.max_epochs) << "epoch " << e.epoch;
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
}

TEST(Train, NoSignalStopsWithinWindowOfBestEpoch) {
  Rng rng(1);
  const auto train_set = no_signal(64, rng);
  const auto valid_set = no_signal(32, rng);
  for (Objective objective : {Objective::kRanking, Objective::kCrossEntropy}) {
    const TrainConfig t = quick_config();
    const auto r = train(small_config(EncoderKind::kMeanPool, objective), t, train_set, valid_set);
    ASSERT_FALSE(r.log.empty());
    EXPECT_LT(static_cast<int>(r.log.size()), t.max_epochs);
    EXPECT_EQ(r.log.back().epoch - r.best_epoch, t.early_stop);
    expect_schedule_consistent(r, t);
  }
}

TEST(Train, LearningRateNeverIncreases) {
  Rng rng(2);
  const auto train_set = no_signal(48, rng);
  const auto valid_set = no_signal(24, rng);
  TrainConfig t = quick_config();
  t.patience = 2;
  t.early_stop = 12;
  const auto r = train(small_config(EncoderKind::kBiGru, Objective::kRanking), t, train_set,
                       valid_set);
  int decays = 0;
  for (std::size_t i = 1; i < r.log.size(); ++i) {
    EXPECT_LE(r.log[i].lr, r.log[i - 1].lr);
    decays += r.log[i].lr < r.log[i - 1].lr;
  }
  EXPECT_GT(decays, 0);
  expect_schedule_consistent(r, t);
}

TEST(Train, ReturnsParametersOfBestEpoch) {
  Rng rng(3);
  const auto train_set = no_signal(64, rng);
  const auto valid_set = no_signal(32, rng);
  const TrainConfig t = quick_config();
  const ModelConfig c = small_config(EncoderKind::kMaxPool, Objective::kCrossEntropy);
  const auto r = train(c, t, train_set, valid_set);
  const LossOptions options{c.objective, t.margin};
  const double returned = dataset_loss(r.model, valid_set, options, t.batch_size);
  EXPECT_EQ(returned, r.log[static_cast<std::size_t>(r.best_epoch - 1)].valid_loss);
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& e : r.log) lowest = std::min(lowest, e.valid_loss);
  EXPECT_LE(returned, lowest + t.improvement_tolerance);
}

TEST(Train, SeparableDataImproves) {
  Rng rng(4);
  const auto train_set = separable(256, rng);
  const auto valid_set = separable(64, rng);
  for (Objective objective : {Objective::kRanking, Objective::kCrossEntropy}) {
    TrainConfig t = quick_config();
    t.max_epochs = 40;
    const ModelConfig c = small_config(EncoderKind::kMaxPool, objective);
    const auto r = train(c, t, train_set, valid_set);
    for (std::size_t i = 1; i < r.log.size(); ++i) {
      EXPECT_LE(r.log[i].best_so_far, r.log[i - 1].best_so_far);
    }
    EXPECT_LT(r.log.back().best_so_far, 0.5 * r.log.front().valid_loss);
    std::size_t correct = 0;
    for (const auto& triple : valid_set) {
      const VectorXd q = encode(r.model, triple.query);
      correct += mlp_forward(r.model, q, encode(r.model, triple.positive)) >
                 mlp_forward(r.model, q, encode(r.model, triple.negative));
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(valid_set.size()), 0.9);
  }
}

TEST(Train, BitwiseDeterministic) {
  Rng rng(5);
  const auto train_set = no_signal(40, rng);
  const auto valid_set = no_signal(20, rng);
  TrainConfig t = quick_config();
  t.max_epochs = 15;
  const ModelConfig c = small_config(EncoderKind::kBiGru, Objective::kCrossEntropy);
  const auto a = train(c, t, train_set, valid_set);
  const auto b = train(c, t, train_set, valid_set);
  EXPECT_TRUE(a.model.params == b.model.params);
  EXPECT_EQ(serialize_training_log(a.log), serialize_training_log(b.log));
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  t.seed = 18;
  const auto other = train(c, t, train_set, valid_set);
  EXPECT_NE(serialize_training_log(a.log), serialize_training_log(other.log));
}

TEST(Train, CallbackSeesEveryEpoch) {
  Rng rng(6);
  const auto train_set = no_signal(16, rng);
  TrainConfig t = quick_config();
  t.max_epochs = 4;
  std::vector<int> epochs;
  const auto r = train(small_config(EncoderKind::kMeanPool, Objective::kRanking), t, train_set,
                       train_set, [&](const EpochLog& e) { epochs.push_back(e.epoch); });
  EXPECT_EQ(epochs, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(r.log.size(), 4u);
}

TEST(Train, RejectsInvalidConfiguration) {
  Rng rng(7);
  const auto set = no_signal(4, rng);
  const ModelConfig c = small_config(EncoderKind::kMeanPool, Objective::kRanking);
  auto expect_rejected = [&](auto mutate) {
    TrainConfig t = quick_config();
    mutate(t);
    EXPECT_THROW(t.validate(), DomainError);
    EXPECT_THROW(train(c, t, set, set), DomainError);
  };
  expect_rejected([](TrainConfig& t) { t.margin = 0.0; });
  expect_rejected([](TrainConfig& t) { t.decay_factor = 1.0; });
  expect_rejected([](TrainConfig& t) { t.decay_factor = 0.0; });
  expect_rejected([](TrainConfig& t) { t.patience = 0; });
  expect_rejected([](TrainConfig& t) { t.early_stop = 0; });
  expect_rejected([](TrainConfig& t) { t.batch_size = 0; });
  expect_rejected([](TrainConfig& t) { t.max_epochs = 0; });
  EXPECT_NO_THROW(TrainConfig{}.validate());
  EXPECT_THROW(train(c, quick_config(), {}, set), DomainError);
  EXPECT_THROW(train(c, quick_config(), set, {}), DomainError);
}

TEST(TrainingLog, OneJsonObjectPerEpoch) {
  const std::vector<EpochLog> log{{1, 0.7, 0.69, 1e-4, 0.69}, {2, 0.6, 0.7, 1e-4, 0.69}};
  std::istringstream in(serialize_training_log(log));
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), ++count);
    EXPECT_TRUE(j.contains("train_loss"));
    EXPECT_TRUE(j.contains("valid_loss"));
    EXPECT_TRUE(j.contains("lr"));
  }
  EXPECT_EQ(count, 2);
}

TEST(ResolveTriples, UsesSourceAndReportsMissingUtterances) {
  ContextualStore store(2);
  store.insert({"q:0", {"hi"}, MatrixXd::Ones(2, 1)});
  store.insert({"r:0", {"yo"}, MatrixXd::Zero(2, 1)});
  store.insert({"r:1", {"no"}, MatrixXd::Constant(2, 1, 3.0)});
  const EmbeddingSource source(std::move(store));
  const Utterance q{"q:0", {"hi"}}, pos{"r:0", {"yo"}}, neg{"r:1", {"no"}};
  const std::vector<TrainExample> examples{{q, pos, neg}};
  const auto triples = resolve_triples(examples, source);
  ASSERT_EQ(triples.size(), 1u);
  EXPECT_EQ(triples[0].query, MatrixXd::Ones(2, 1));
  EXPECT_EQ(triples[0].negative, MatrixXd::Constant(2, 1, 3.0));
  const std::vector<TrainExample> missing{{q, pos, {"r:9", {"??"}}}};
  EXPECT_THROW(resolve_triples(missing, source), FormatError);
}

}  // namespace
}  // namespace dialeval
