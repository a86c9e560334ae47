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

#include "dialeval/model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <vector>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace dialeval {
namespace {

using testing::random_matrix;
using testing::randomize;
using testing::to_vec;

ModelConfig tiny_config(EncoderKind encoder, Objective objective) {
  ModelConfig c;
  c.encoder = encoder;
  c.objective = objective;
  c.embedding = EmbeddingKind::kStatic;
  c.input_dim = 4;
  c.gru_hidden = 2;
  c.gru_layers = 2;
  c.mlp_hidden = {4, 4, 3};
  c.seed = 99;
  return c;
}

std::vector<TokenTriple<double>> random_triples(std::size_t count, Eigen::Index dim, Rng& rng) {
  std::vector<TokenTriple<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto len = [&] { return 1 + static_cast<Eigen::Index>(rng.below(4)); };
    out.push_back({random_matrix(dim, len(), rng), random_matrix(dim, len(), rng),
                   random_matrix(dim, len(), rng)});
  }
  return out;
}

constexpr std::array<EncoderKind, 3> kEncoders{EncoderKind::kBiGru, EncoderKind::kMaxPool,
                                               EncoderKind::kMeanPool};
constexpr std::array<Objective, 2> kObjectives{Objective::kRanking, Objective::kCrossEntropy};

// ---------------------------------------------------------------------------

TEST(QuadraticFeature, Examples) {
  const VectorXd e1 = VectorXd::Unit(3, 0);
  EXPECT_EQ(quadratic_feature(e1, MatrixXd::Identity(3, 3), e1), 1.0);
  Rng rng(1);
  const VectorXd q = random_matrix(3, 1, rng), r = random_matrix(3, 1, rng);
  EXPECT_EQ(quadratic_feature(q, MatrixXd::Zero(3, 3), r), 0.0);
}

TEST(QuadraticFeature, MatchesDoubleLoop) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd m = random_matrix(3, 3, rng);
    const VectorXd q = random_matrix(3, 1, rng), r = random_matrix(3, 1, rng);
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) expected += q[i] * m(i, j) * r[j];
    }
    EXPECT_NEAR(quadratic_feature(q, m, r), expected, 1e-12);
  }
}

TEST(QuadraticFeature, DimensionMismatch) {
  EXPECT_THROW(quadratic_feature(VectorXd::Zero(2), MatrixXd::Zero(3, 3), VectorXd::Zero(3)),
               DomainError);
}

TEST(ModelConfig, DefaultSizes) {
  ModelConfig c;
  c.input_dim = 300;
  c.encoder = EncoderKind::kBiGru;
  EXPECT_EQ(c.sentence_dim(), 256);
  EXPECT_EQ(c.feature_dim(), 513);
  const auto model = init_model<double>(c);
  EXPECT_EQ(model.params.weights[0].rows(), 256);
  EXPECT_EQ(model.params.weights[0].cols(), 513);
  EXPECT_EQ(model.params.weights[1].rows(), 512);
  EXPECT_EQ(model.params.weights[2].rows(), 128);
  EXPECT_EQ(model.params.head_weight.rows(), 2);
  EXPECT_TRUE(model.params.all_finite());
  c.encoder = EncoderKind::kMaxPool;
  EXPECT_EQ(c.feature_dim(), 601);
}

TEST(MlpForward, ZeroModelScoresOneHalf) {
  Rng rng(3);
  for (Objective objective : kObjectives) {
    for (EncoderKind encoder : kEncoders) {
      const ModelConfig c = tiny_config(encoder, objective);
      const UnrefModel<double> model{c, ModelParams<double>::zeros(c)};
      const VectorXd q = random_matrix(c.sentence_dim(), 1, rng, 5.0);
      const VectorXd r = random_matrix(c.sentence_dim(), 1, rng, 5.0);
      EXPECT_EQ(mlp_forward(model, q, r), 0.5);
    }
  }
}

TEST(MlpForward, MatchesStraightLineOracle) {
  Rng rng(4);
  for (Objective objective : kObjectives) {
    ModelConfig c = tiny_config(EncoderKind::kMaxPool, objective);
    c.input_dim = 2;
    c.mlp_hidden = {3, 3, 2};
    UnrefModel<double> model{c, ModelParams<double>::zeros(c)};
    for (int trial = 0; trial < 10; ++trial) {
      randomize(model.params, rng, 1.0);
      const VectorXd q = random_matrix(2, 1, rng), r = random_matrix(2, 1, rng);
      const double score = mlp_forward(model, q, r);
      EXPECT_NEAR(score, testing::oracle_mlp_score(model, to_vec(q), to_vec(r)), 1e-10);
      EXPECT_GT(score, 0.0);
      EXPECT_LT(score, 1.0);
    }
  }
}

TEST(MlpForward, NonFiniteParametersAreReported) {
  const ModelConfig c = tiny_config(EncoderKind::kMeanPool, Objective::kRanking);
  UnrefModel<double> model{c, ModelParams<double>::zeros(c)};
  model.params.bilinear(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(mlp_forward(model, VectorXd::Ones(4), VectorXd::Ones(4)), NumericError);
}

TEST(Encode, MatchesOracleForEveryEncoder) {
  Rng rng(5);
  for (EncoderKind encoder : kEncoders) {
    const auto model = init_model<double>(tiny_config(encoder, Objective::kRanking));
    const MatrixXd tokens = random_matrix(4, 5, rng);
    const auto expected = testing::oracle_encode(model, tokens);
    const VectorXd got = encode(model, tokens);
    ASSERT_EQ(static_cast<std::size_t>(got.size()), expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) {
      EXPECT_NEAR(got[static_cast<Eigen::Index>(k)], expected[k], 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------

TEST(RankingLoss, Examples) {
  EXPECT_EQ(ranking_loss(0.9, 0.2, 0.5), 0.0);
  EXPECT_EQ(ranking_loss(0.37, 0.37, 0.5), 0.5);
  EXPECT_NEAR(ranking_loss(0.1, 0.9, 0.5), 1.3, 1e-15);
}

TEST(RankingLoss, ZeroExactlyWhenMarginMet) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double sp = rng.uniform01(), sn = rng.uniform01(), margin = 0.01 + rng.uniform01();
    const double loss = ranking_loss(sp, sn, margin);
    EXPECT_GE(loss, 0.0);
    EXPECT_EQ(loss == 0.0, sp - sn >= margin);
  }
}

TEST(CrossEntropyLoss, Examples) {
  EXPECT_NEAR(cross_entropy_loss(1.0 - 1e-12, 1), 0.0, 1e-11);
  EXPECT_NEAR(cross_entropy_loss(0.5, 1), 0.693147, 1e-6);
  EXPECT_NEAR(cross_entropy_loss(0.5, 0), 0.693147, 1e-6);
  EXPECT_NEAR(cross_entropy_loss(0.9, 0), 2.302585, 1e-6);
  EXPECT_TRUE(std::isfinite(cross_entropy_loss(0.0, 1)));
  EXPECT_TRUE(std::isfinite(cross_entropy_loss(1.0, 0)));
}

TEST(CrossEntropyLoss, MonotoneInProbability) {
  double prev1 = std::numeric_limits<double>::infinity();
  double prev0 = -1.0;
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    const double l1 = cross_entropy_loss(p, 1), l0 = cross_entropy_loss(p, 0);
    EXPECT_GE(l1, 0.0);
    EXPECT_GE(l0, 0.0);
    EXPECT_LT(l1, prev1);
    EXPECT_GT(l0, prev0);
    prev1 = l1;
    prev0 = l0;
  }
}

TEST(BatchLoss, AveragesPerObjective) {
  Rng rng(7);
  for (Objective objective : kObjectives) {
    auto model = init_model<double>(tiny_config(EncoderKind::kMeanPool, objective));
    randomize(model.params, rng, 0.8);
    const auto batch = random_triples(5, 4, rng);
    double expected = 0.0;
    for (const auto& t : batch) {
      const VectorXd q = encode(model, t.query);
      const double sp = mlp_forward(model, q, encode(model, t.positive));
      const double sn = mlp_forward(model, q, encode(model, t.negative));
      expected += objective == Objective::kRanking
                      ? ranking_loss(sp, sn, 0.5) / 5.0
                      : (cross_entropy_loss(sp, 1) + cross_entropy_loss(sn, 0)) / 10.0;
    }
    EXPECT_NEAR(batch_loss<double>(model, batch, {objective, 0.5}), expected, 1e-12);
  }
}

// ---------------------------------------------------------------------------

TEST(ComputeGradients, MatchFiniteDifferencesForEveryCombination) {
  Rng rng(8);
  for (EncoderKind encoder : kEncoders) {
    for (Objective objective : kObjectives) {
      auto model = init_model<double>(tiny_config(encoder, objective));
      randomize(model.params, rng, 0.7);
      const auto batch = random_triples(3, 4, rng);
      // A margin above 1 keeps every triple on the sloped side of the hinge.
      const LossOptions options{objective, 1.5};
      const auto analytic = compute_gradients<double>(model, batch, options);
      EXPECT_NEAR(analytic.loss, batch_loss<double>(model, batch, options), 1e-14);
      const auto result = testing::check_gradients(
          model.params, analytic.grads,
          [&] { return batch_loss<double>(model, batch, options); });
      EXPECT_LT(result.worst_relative_error, testing::kFdTolerance)
          << to_string(encoder) << "/" << to_string(objective) << " worst at "
          << result.worst_parameter;
      EXPECT_EQ(result.checked, model.params.parameter_count());
    }
  }
}

TEST(ComputeGradients, FlatHingeGivesExactlyZero) {
  Rng rng(9);
  for (EncoderKind encoder : kEncoders) {
    auto model = init_model<double>(tiny_config(encoder, Objective::kRanking));
    randomize(model.params, rng, 1.0);
    auto batch = random_triples(6, 4, rng);
    double smallest_gap = 1.0;
    for (auto& t : batch) {
      const VectorXd q = encode(model, t.query);
      const double sp = mlp_forward(model, q, encode(model, t.positive));
      const double sn = mlp_forward(model, q, encode(model, t.negative));
      if (sp < sn) std::swap(t.positive, t.negative);
      smallest_gap = std::min(smallest_gap, std::abs(sp - sn));
    }
    ASSERT_GT(smallest_gap, 0.0);
    const auto result =
        compute_gradients<double>(model, batch, {Objective::kRanking, 0.5 * smallest_gap});
    EXPECT_EQ(result.loss, 0.0);
    ModelParams<double>::visit(
        [](const std::string& name, const auto& g) {
          EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0) << name;
        },
        result.grads);
  }
}

TEST(ComputeGradients, DuplicatedBatchKeepsMeanGradient) {
  Rng rng(10);
  for (EncoderKind encoder : kEncoders) {
    for (Objective objective : kObjectives) {
      auto model = init_model<double>(tiny_config(encoder, objective));
      randomize(model.params, rng, 0.7);
      const auto batch = random_triples(4, 4, rng);
      auto doubled = batch;
      doubled.insert(doubled.end(), batch.begin(), batch.end());
      const LossOptions options{objective, 1.5};
      const auto once = compute_gradients<double>(model, batch, options);
      const auto twice = compute_gradients<double>(model, doubled, options);
      EXPECT_NEAR(once.loss, twice.loss, 1e-12);
      ModelParams<double>::visit(
          [](const std::string& name, const auto& a, const auto& b) {
            EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12) << name;
          },
          once.grads, twice.grads);
    }
  }
}

TEST(ComputeGradients, EmptyBatchIsAnError) {
  const auto model = init_model<double>(tiny_config(EncoderKind::kMaxPool, Objective::kRanking));
  EXPECT_THROW(compute_gradients<double>(model, {}, {}), DomainError);
}

// ---------------------------------------------------------------------------

TEST(AdamStep, ZeroGradientFromZeroStateLeavesParameters) {
  const ModelConfig c = tiny_config(EncoderKind::kBiGru, Objective::kCrossEntropy);
  auto model = init_model<double>(c);
  const auto before = model.params;
  auto state = AdamState<double>::zeros(c, 1e-4);
  auto grads = ModelParams<double>::zeros(c);
  adam_step(state, model.params, grads);
  EXPECT_EQ(state.step, 1);
  EXPECT_TRUE(model.params == before);
  EXPECT_TRUE(state.first_moment == ModelParams<double>::zeros(c));
  EXPECT_TRUE(state.second_moment == ModelParams<double>::zeros(c));
}

TEST(AdamStep, ZeroGradientDecaysMoments) {
  Rng rng(11);
  const ModelConfig c = tiny_config(EncoderKind::kMaxPool, Objective::kRanking);
  auto model = init_model<double>(c);
  auto state = AdamState<double>::zeros(c, 1e-4);
  randomize(state.first_moment, rng, 1.0);
  randomize(state.second_moment, rng, 1.0);
  ModelParams<double>::visit([](const std::string&, auto& v) { v = v.cwiseAbs(); },
                             state.second_moment);
  const auto m0 = state.first_moment, v0 = state.second_moment;
  auto grads = ModelParams<double>::zeros(c);
  adam_step(state, model.params, grads);
  ModelParams<double>::visit(
      [](const std::string&, const auto& m, const auto& v, const auto& m_prev,
         const auto& v_prev) {
        EXPECT_EQ(m, (0.9 * m_prev).eval());
        EXPECT_EQ(v, (0.999 * v_prev).eval());
      },
      state.first_moment, state.second_moment, m0, v0);
}

TEST(AdamStep, FirstStepMovesByLearningRate) {
  const ModelConfig c = tiny_config(EncoderKind::kBiGru, Objective::kRanking);
  for (double g : {0.3, -2.0, 0.05, -0.01}) {
    auto model = init_model<double>(c);
    const auto before = model.params;
    const double lr = 1e-4;
    auto state = AdamState<double>::zeros(c, lr);
    auto grads = ModelParams<double>::zeros(c);
    ModelParams<double>::visit([&](const std::string&, auto& a) { a.setConstant(g); }, grads);
    adam_step(state, model.params, grads);
    ModelParams<double>::visit(
        [&](const std::string& name, const auto& after, const auto& prev) {
          const auto delta = (after - prev).array() + lr * (g > 0 ? 1.0 : -1.0);
          EXPECT_LE(delta.abs().maxCoeff(), 1e-6 * lr) << name;
        },
        model.params, before);
  }
}

TEST(AdamStep, FirstStepMatchesBiasCorrectedClosedForm) {
  // After one step m_hat = g and v_hat = g^2, so the update is -lr g / (|g| + eps).
  const ModelConfig c = tiny_config(EncoderKind::kMeanPool, Objective::kCrossEntropy);
  for (double g : {1e-3, -1e-6, 7.5}) {
    auto model = init_model<double>(c);
    const auto before = model.params;
    const double lr = 1e-4;
    auto state = AdamState<double>::zeros(c, lr);
    auto grads = ModelParams<double>::zeros(c);
    ModelParams<double>::visit([&](const std::string&, auto& a) { a.setConstant(g); }, grads);
    adam_step(state, model.params, grads);
    const double expected = -lr * g / (std::abs(g) + 1e-8);
    ModelParams<double>::visit(
        [&](const std::string& name, const auto& after, const auto& prev) {
          const auto delta = (after - prev).array() - expected;
          EXPECT_LE(delta.abs().maxCoeff(), 1e-12 * lr + 1e-15) << name;
        },
        model.params, before);
  }
}

TEST(AdamStep, Deterministic) {
  Rng rng(12);
  const ModelConfig c = tiny_config(EncoderKind::kBiGru, Objective::kCrossEntropy);
  std::vector<ModelParams<double>> grads;
  for (int i = 0; i < 5; ++i) {
    grads.push_back(ModelParams<double>::zeros(c));
    randomize(grads.back(), rng, 1.0);
  }
  auto run = [&] {
    auto model = init_model<double>(c);
    auto state = AdamState<double>::zeros(c, 1e-3);
    auto g = grads;
    for (auto& step : g) adam_step(state, model.params, step);
    return model.params;
  };
  EXPECT_TRUE(run() == run());
}

TEST(AdamStep, ShapeMismatchIsAnError) {
  const ModelConfig c = tiny_config(EncoderKind::kMaxPool, Objective::kRanking);
  auto model = init_model<double>(c);
  auto state = AdamState<double>::zeros(c, 1e-4);
  ModelConfig other = c;
  other.input_dim = 5;
  auto grads = ModelParams<double>::zeros(other);
  EXPECT_THROW(adam_step(state, model.params, grads), DomainError);
}

// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripsEveryCombination) {
  Rng rng(13);
  for (EncoderKind encoder : kEncoders) {
    for (Objective objective : kObjectives) {
      auto model = init_model<double>(tiny_config(encoder, objective));
      randomize(model.params, rng, 1.0);
      const std::string bytes = serialize_checkpoint(model);
      ASSERT_EQ(bytes.substr(0, 4), "UNRF");
      EXPECT_EQ(bytes[4], '\x01');
      EXPECT_EQ(bytes[5], '\x00');
      const auto loaded = deserialize_checkpoint(bytes);
      EXPECT_TRUE(loaded.params == model.params);
      EXPECT_EQ(loaded.config.encoder, encoder);
      EXPECT_EQ(loaded.config.objective, objective);
      EXPECT_EQ(loaded.config.embedding, EmbeddingKind::kStatic);
      EXPECT_EQ(loaded.config.seed, 99u);
      EXPECT_EQ(loaded.config.mlp_hidden, model.config.mlp_hidden);
      EXPECT_EQ(serialize_checkpoint(loaded), bytes);
    }
  }
}

TEST(Checkpoint, SavesAndLoadsFiles) {
  const auto model = init_model<double>(tiny_config(EncoderKind::kBiGru, Objective::kRanking));
  const auto path = std::filesystem::temp_directory_path() / "dialeval_model_test.unrf";
  save_checkpoint(model, path);
  EXPECT_TRUE(load_checkpoint(path).params == model.params);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto model = init_model<double>(tiny_config(EncoderKind::kMeanPool, Objective::kRanking));
  const std::string bytes = serialize_checkpoint(model);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = '\x07';
  EXPECT_THROW(deserialize_checkpoint(bad_version), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 9)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), FormatError);
  std::string nan_value = bytes;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan_value.data() + nan_value.size() - 8, &nan, 8);
  EXPECT_THROW(deserialize_checkpoint(nan_value), FormatError);
}

}  // namespace
}  // namespace dialeval
