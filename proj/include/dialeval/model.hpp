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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include "dialeval/eigen_types.hpp"
#include "dialeval/embedding_io.hpp"
#include "dialeval/encoder.hpp"
#include "dialeval/error.hpp"
#include "dialeval/rng.hpp"

namespace dialeval {

enum class Objective { kRanking, kCrossEntropy };

inline std::string_view to_string(Objective objective) {
  return objective == Objective::kRanking ? "ranking" : "xent";
}

inline Objective parse_objective(std::string_view text) {
  if (text == "ranking") return Objective::kRanking;
  if (text == "xent") return Objective::kCrossEntropy;
  throw DomainError("unknown objective '" + std::string(text) + "'");
}

/// Ranking models end in a scalar sigmoid; cross-entropy models in a
/// two-way softmax whose class 1 is "related".
inline std::string_view head_name(Objective objective) {
  return objective == Objective::kRanking ? "sigmoid_scalar" : "softmax_2";
}

inline constexpr std::size_t kMlpLayers = 3;

struct ModelConfig {
  EncoderKind encoder = EncoderKind::kMaxPool;
  Objective objective = Objective::kCrossEntropy;
  EmbeddingKind embedding = EmbeddingKind::kContextual;
  Eigen::Index input_dim = 0;
  Eigen::Index gru_hidden = 128;
  Eigen::Index gru_layers = 2;
  std::array<Eigen::Index, kMlpLayers> mlp_hidden{256, 512, 128};
  std::uint64_t seed = 0;

  Eigen::Index sentence_dim() const {
    return encoder == EncoderKind::kBiGru ? 2 * gru_hidden : input_dim;
  }
  Eigen::Index feature_dim() const { return 2 * sentence_dim() + 1; }
  Eigen::Index head_outputs() const {
    return objective == Objective::kRanking ? 1 : 2;
  }
};

template <class Scalar>
struct ModelParams {
  GruParams<Scalar> gru;  // no cells for pooling encoders
  Matrix<Scalar> bilinear;
  std::array<Matrix<Scalar>, kMlpLayers> weights;
  std::array<Vector<Scalar>, kMlpLayers> biases;
  Matrix<Scalar> head_weight;
  Vector<Scalar> head_bias;

  static ModelParams zeros(const ModelConfig& config) {
    ModelParams p;
    if (config.encoder == EncoderKind::kBiGru) {
      p.gru = GruParams<Scalar>::zeros(config.input_dim, config.gru_hidden,
                                       config.gru_layers);
    }
    const Eigen::Index ds = config.sentence_dim();
    p.bilinear = Matrix<Scalar>::Zero(ds, ds);
    Eigen::Index fan_in = config.feature_dim();
    for (std::size_t k = 0; k < kMlpLayers; ++k) {
      p.weights[k] = Matrix<Scalar>::Zero(config.mlp_hidden[k], fan_in);
      p.biases[k] = Vector<Scalar>::Zero(config.mlp_hidden[k]);
      fan_in = config.mlp_hidden[k];
    }
    p.head_weight = Matrix<Scalar>::Zero(config.head_outputs(), fan_in);
    p.head_bias = Vector<Scalar>::Zero(config.head_outputs());
    return p;
  }

  /// Calls f(name, arrays...) for every parameter array in checkpoint order,
  /// zipped across same-shaped parameter sets.
  template <class F, class... Sets>
  static void visit(F&& f, Sets&... sets) {
    const std::size_t cells = std::get<0>(std::tie(sets...)).gru.cells.size();
    for (std::size_t i = 0; i < cells; ++i) {
      const std::string prefix = "gru.l" + std::to_string(i / 2) +
                                 (i % 2 == 0 ? ".fwd." : ".bwd.");
      GruCell<Scalar>::visit(
          [&](const char* name, auto&... arrays) { f(prefix + name, arrays...); },
          sets.gru.cells[i]...);
    }
    f(std::string("bilinear"), sets.bilinear...);
    for (std::size_t k = 0; k < kMlpLayers; ++k) {
      f("mlp" + std::to_string(k) + ".weight", sets.weights[k]...);
      f("mlp" + std::to_string(k) + ".bias", sets.biases[k]...);
    }
    f(std::string("head.weight"), sets.head_weight...);
    f(std::string("head.bias"), sets.head_bias...);
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    visit([&](const std::string&, const auto& a) { total += static_cast<std::size_t>(a.size()); },
          *this);
    return total;
  }

  bool all_finite() const {
    bool finite = true;
    visit([&](const std::string&, const auto& a) { finite = finite && a.allFinite(); },
          *this);
    return finite;
  }

  bool operator==(const ModelParams& other) const {
    bool equal = true;
    visit(
        [&](const std::string&, const auto& x, const auto& y) {
          equal = equal && x.rows() == y.rows() && x.cols() == y.cols() && x == y;
        },
        *this, other);
    return equal;
  }
};

template <class Scalar>
struct UnrefModel {
  ModelConfig config;
  ModelParams<Scalar> params;
};

/// Xavier-uniform matrices (GRU, bilinear, MLP, head) and zero biases.
template <class Scalar>
UnrefModel<Scalar> init_model(const ModelConfig& config) {
  if (config.input_dim <= 0) throw DomainError("model input dimension must be positive");
  for (Eigen::Index h : config.mlp_hidden) {
    if (h <= 0) throw DomainError("MLP hidden sizes must be positive");
  }
  Rng rng(derive_seed(config.seed, "init"));
  UnrefModel<Scalar> model{config, ModelParams<Scalar>::zeros(config)};
  auto& p = model.params;
  if (config.encoder == EncoderKind::kBiGru) {
    p.gru = init_gru<Scalar>(config.input_dim, config.gru_hidden, config.gru_layers, rng);
  }
  xavier_uniform(p.bilinear, rng);
  for (auto& w : p.weights) xavier_uniform(w, rng);
  xavier_uniform(p.head_weight, rng);
  return model;
}

// ---------------------------------------------------------------------------
// Scalar pieces.

/// q^T M r.
template <class DerivedQ, class DerivedM, class DerivedR>
typename DerivedQ::Scalar quadratic_feature(const Eigen::MatrixBase<DerivedQ>& q,
                                            const Eigen::MatrixBase<DerivedM>& m,
                                            const Eigen::MatrixBase<DerivedR>& r) {
  if (m.rows() != q.size() || m.cols() != r.size()) {
    throw DomainError("quadratic_feature: dimension mismatch");
  }
  return q.dot(m * r);
}

/// max(0, margin - s_pos + s_neg).
inline double ranking_loss(double s_pos, double s_neg, double margin) {
  return std::max(0.0, margin - s_pos + s_neg);
}

inline constexpr double kProbabilityClamp = 1e-12;

/// -log p for label 1, -log(1 - p) for label 0, with p clamped to
/// [1e-12, 1 - 1e-12].
inline double cross_entropy_loss(double p_related, int label) {
  const double p = std::clamp(p_related, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

// ---------------------------------------------------------------------------
// Encoding.

template <class Scalar>
struct EncodedUtterance {
  Vector<Scalar> rep;
  BiGruTrace<Scalar> trace;  // empty for pooling encoders
};

template <class Scalar, class Derived>
EncodedUtterance<Scalar> encode_utterance(const UnrefModel<Scalar>& model,
                                          const Eigen::MatrixBase<Derived>& tokens) {
  if (tokens.cols() == 0) throw DomainError("cannot encode an empty utterance");
  if (tokens.rows() != model.config.input_dim) {
    throw DomainError("utterance dimension " + std::to_string(tokens.rows()) +
                      " does not match model input dimension " +
                      std::to_string(model.config.input_dim));
  }
  EncodedUtterance<Scalar> out;
  switch (model.config.encoder) {
    case EncoderKind::kMaxPool:
      out.rep = pool_max(tokens);
      break;
    case EncoderKind::kMeanPool:
      out.rep = pool_mean(tokens);
      break;
    case EncoderKind::kBiGru:
      out.trace = bigru_forward(model.params.gru, tokens);
      out.rep = out.trace.output;
      break;
  }
  return out;
}

template <class Scalar, class Derived>
Vector<Scalar> encode(const UnrefModel<Scalar>& model,
                      const Eigen::MatrixBase<Derived>& tokens) {
  return encode_utterance(model, tokens).rep;
}

// ---------------------------------------------------------------------------
// MLP over [q ; q^T M r ; r].

template <class Scalar>
struct MlpTrace {
  Matrix<Scalar> queries;    // ds x B
  Matrix<Scalar> responses;  // ds x B
  std::array<Matrix<Scalar>, kMlpLayers + 1> activations;  // [features, h1, h2, h3]
  Matrix<Scalar> logits;     // outputs x B
  Vector<Scalar> scores;     // B
};

template <class Scalar>
MlpTrace<Scalar> mlp_forward_batch(const UnrefModel<Scalar>& model,
                                   Matrix<Scalar> queries, Matrix<Scalar> responses) {
  const auto& p = model.params;
  const Eigen::Index ds = model.config.sentence_dim();
  if (queries.rows() != ds || responses.rows() != ds ||
      queries.cols() != responses.cols()) {
    throw DomainError("mlp_forward: representation dimensions do not match the model");
  }
  const Eigen::Index batch = queries.cols();
  MlpTrace<Scalar> t;
  Matrix<Scalar>& x = t.activations[0];
  x.resize(2 * ds + 1, batch);
  x.topRows(ds) = queries;
  x.row(ds) = queries.cwiseProduct(p.bilinear * responses).colwise().sum();
  x.bottomRows(ds) = responses;
  for (std::size_t k = 0; k < kMlpLayers; ++k) {
    t.activations[k + 1] =
        ((p.weights[k] * t.activations[k]).colwise() + p.biases[k]).array().tanh().matrix();
  }
  t.logits = (p.head_weight * t.activations[kMlpLayers]).colwise() + p.head_bias;
  if (model.config.objective == Objective::kRanking) {
    t.scores = t.logits.row(0).transpose().unaryExpr(&detail::sigmoid<Scalar>);
  } else {
    // softmax over two logits, probability of class 1
    t.scores = (t.logits.row(1) - t.logits.row(0)).transpose().unaryExpr(
        &detail::sigmoid<Scalar>);
  }
  if (!t.scores.allFinite() || !t.activations[kMlpLayers].allFinite()) {
    throw NumericError("non-finite activation in MLP forward pass");
  }
  t.queries = std::move(queries);
  t.responses = std::move(responses);
  return t;
}

/// Relatedness score in (0, 1) for one encoded query/response pair.
template <class Scalar, class DerivedQ, class DerivedR>
Scalar mlp_forward(const UnrefModel<Scalar>& model,
                   const Eigen::MatrixBase<DerivedQ>& query_rep,
                   const Eigen::MatrixBase<DerivedR>& response_rep) {
  return mlp_forward_batch(model, Matrix<Scalar>(query_rep), Matrix<Scalar>(response_rep))
      .scores[0];
}

/// Backpropagates dL/dscores through the MLP. Accumulates parameter
/// gradients into `grad` and returns dL/dqueries and dL/dresponses.
template <class Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> mlp_backward(const UnrefModel<Scalar>& model,
                                                       const MlpTrace<Scalar>& t,
                                                       const Vector<Scalar>& grad_scores,
                                                       ModelParams<Scalar>& grad) {
  const auto& p = model.params;
  const Eigen::Index ds = model.config.sentence_dim();
  const Eigen::Index batch = t.scores.size();
  const Vector<Scalar> slope =
      t.scores.array() * (Scalar(1) - t.scores.array()) * grad_scores.array();
  Matrix<Scalar> grad_logits(model.config.head_outputs(), batch);
  if (model.config.objective == Objective::kRanking) {
    grad_logits.row(0) = slope.transpose();
  } else {
    grad_logits.row(0) = -slope.transpose();
    grad_logits.row(1) = slope.transpose();
  }
  grad.head_weight.noalias() += grad_logits * t.activations[kMlpLayers].transpose();
  grad.head_bias += grad_logits.rowwise().sum();
  Matrix<Scalar> upstream = p.head_weight.transpose() * grad_logits;
  for (std::size_t k = kMlpLayers; k-- > 0;) {
    const Matrix<Scalar> pre =
        upstream.array() * (Scalar(1) - t.activations[k + 1].array().square());
    grad.weights[k].noalias() += pre * t.activations[k].transpose();
    grad.biases[k] += pre.rowwise().sum();
    upstream = p.weights[k].transpose() * pre;
  }
  // upstream is now dL/dfeatures.
  const Vector<Scalar> grad_bilinear = upstream.row(ds).transpose();
  const Matrix<Scalar> weighted_q = t.queries * grad_bilinear.asDiagonal();
  grad.bilinear.noalias() += weighted_q * t.responses.transpose();
  Matrix<Scalar> grad_q = upstream.topRows(ds);
  Matrix<Scalar> grad_r = upstream.bottomRows(ds);
  grad_q.noalias() += (p.bilinear * t.responses) * grad_bilinear.asDiagonal();
  grad_r.noalias() += p.bilinear.transpose() * weighted_q;
  return {std::move(grad_q), std::move(grad_r)};
}

// ---------------------------------------------------------------------------
// Batch objective and gradients.

/// A training triple resolved to token matrices (dim x tokens each).
template <class Scalar>
struct TokenTriple {
  Matrix<Scalar> query;
  Matrix<Scalar> positive;
  Matrix<Scalar> negative;
};

struct LossOptions {
  Objective objective = Objective::kCrossEntropy;
  double margin = 0.5;
};

template <class Scalar>
struct GradientResult {
  Scalar loss = 0;
  ModelParams<Scalar> grads;
};

namespace detail {

// Scores for the B positives followed by the B negatives of a batch.
template <class Scalar>
struct BatchForward {
  std::vector<EncodedUtterance<Scalar>> queries, positives, negatives;
  MlpTrace<Scalar> mlp;
};

template <class Scalar>
BatchForward<Scalar> forward_triples(const UnrefModel<Scalar>& model,
                                     std::span<const TokenTriple<Scalar>> batch) {
  if (batch.empty()) throw DomainError("empty batch");
  const Eigen::Index ds = model.config.sentence_dim();
  const auto size = static_cast<Eigen::Index>(batch.size());
  BatchForward<Scalar> f;
  Matrix<Scalar> q(ds, 2 * size);
  Matrix<Scalar> r(ds, 2 * size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const auto& triple = batch[static_cast<std::size_t>(i)];
    f.queries.push_back(encode_utterance(model, triple.query));
    f.positives.push_back(encode_utterance(model, triple.positive));
    f.negatives.push_back(encode_utterance(model, triple.negative));
    q.col(i) = f.queries.back().rep;
    q.col(size + i) = f.queries.back().rep;
    r.col(i) = f.positives.back().rep;
    r.col(size + i) = f.negatives.back().rep;
  }
  f.mlp = mlp_forward_batch(model, std::move(q), std::move(r));
  return f;
}

// Mean batch loss and its gradient with respect to the 2B scores.
template <class Scalar>
Scalar loss_and_score_grad(const Vector<Scalar>& scores, const LossOptions& options,
                           Vector<Scalar>* grad_scores) {
  const Eigen::Index size = scores.size() / 2;
  Scalar total = 0;
  if (grad_scores != nullptr) grad_scores->setZero(scores.size());
  if (options.objective == Objective::kRanking) {
    const Scalar inv = Scalar(1) / static_cast<Scalar>(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      const Scalar gap = Scalar(options.margin) - scores[i] + scores[size + i];
      if (gap > Scalar(0)) {
        total += gap;
        if (grad_scores != nullptr) {
          (*grad_scores)[i] = -inv;
          (*grad_scores)[size + i] = inv;
        }
      }
    }
    return total * inv;
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(2 * size);
  for (Eigen::Index c = 0; c < 2 * size; ++c) {
    const bool related = c < size;
    const Scalar p = scores[c];
    const Scalar lo = Scalar(kProbabilityClamp);
    const Scalar hi = Scalar(1) - Scalar(kProbabilityClamp);
    const Scalar clamped = std::clamp(p, lo, hi);
    total += related ? -std::log(clamped) : -std::log1p(-clamped);
    if (grad_scores != nullptr && p > lo && p < hi) {
      (*grad_scores)[c] = (related ? -Scalar(1) / p : Scalar(1) / (Scalar(1) - p)) * inv;
    }
  }
  return total * inv;
}

}  // namespace detail

/// Mean loss over a batch of triples. Ranking averages the hinge over
/// triples; cross-entropy averages over the 2B labelled pairs.
template <class Scalar>
Scalar batch_loss(const UnrefModel<Scalar>& model,
                  std::span<const TokenTriple<Scalar>> batch,
                  const LossOptions& options) {
  const auto f = detail::forward_triples(model, batch);
  return detail::loss_and_score_grad<Scalar>(f.mlp.scores, options, nullptr);
}

/// Mean batch loss and its exact gradient with respect to every parameter,
/// backpropagating through time into the GRU for the bigru encoder.
template <class Scalar>
GradientResult<Scalar> compute_gradients(const UnrefModel<Scalar>& model,
                                         std::span<const TokenTriple<Scalar>> batch,
                                         const LossOptions& options) {
  const auto f = detail::forward_triples(model, batch);
  GradientResult<Scalar> result;
  result.grads = ModelParams<Scalar>::zeros(model.config);
  Vector<Scalar> grad_scores;
  result.loss = detail::loss_and_score_grad(f.mlp.scores, options, &grad_scores);
  if (!std::isfinite(static_cast<double>(result.loss))) {
    throw NumericError("non-finite batch loss");
  }
  auto [grad_q, grad_r] = mlp_backward(model, f.mlp, grad_scores, result.grads);
  if (model.config.encoder == EncoderKind::kBiGru) {
    const auto size = static_cast<Eigen::Index>(batch.size());
    for (Eigen::Index i = 0; i < size; ++i) {
      const auto u = static_cast<std::size_t>(i);
      const Vector<Scalar> dq = grad_q.col(i) + grad_q.col(size + i);
      bigru_backward(model.params.gru, f.queries[u].trace, dq, result.grads.gru);
      bigru_backward(model.params.gru, f.positives[u].trace, grad_r.col(i).eval(),
                     result.grads.gru);
      bigru_backward(model.params.gru, f.negatives[u].trace, grad_r.col(size + i).eval(),
                     result.grads.gru);
    }
  }
  if (!result.grads.all_finite()) throw NumericError("non-finite gradient");
  return result;
}

// ---------------------------------------------------------------------------
// Adam.

template <class Scalar>
struct AdamState {
  ModelParams<Scalar> first_moment;
  ModelParams<Scalar> second_moment;
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(const ModelConfig& config, double lr) {
    AdamState s;
    s.first_moment = ModelParams<Scalar>::zeros(config);
    s.second_moment = ModelParams<Scalar>::zeros(config);
    s.lr = lr;
    return s;
  }
};

/// One bias-corrected Adam update of `params` in place.
template <class Scalar>
void adam_step(AdamState<Scalar>& state, ModelParams<Scalar>& params,
               ModelParams<Scalar>& grads) {
  state.step += 1;
  const Scalar b1 = Scalar(state.beta1);
  const Scalar b2 = Scalar(state.beta2);
  const Scalar correction1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar correction2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  const Scalar lr = Scalar(state.lr);
  const Scalar eps = Scalar(state.epsilon);
  ModelParams<Scalar>::visit(
      [&](const std::string& name, auto& p, auto& g, auto& m, auto& v) {
        if (p.rows() != g.rows() || p.cols() != g.cols()) {
          throw DomainError("adam_step: gradient shape mismatch for " + name);
        }
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + eps);
      },
      params, grads, state.first_moment, state.second_moment);
}

// ---------------------------------------------------------------------------
// Checkpoints ("UNRF" container).

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "UNRF", u16 version, u32 manifest length, JSON manifest, then every
/// parameter array as little-endian f64 in manifest order (column-major).
std::string serialize_checkpoint(const UnrefModel<double>& model);
UnrefModel<double> deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const UnrefModel<double>& model, const std::filesystem::path& path);
UnrefModel<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace dialeval
