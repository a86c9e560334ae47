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

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dialeval/eigen_types.hpp"
#include "dialeval/error.hpp"
#include "dialeval/rng.hpp"

namespace dialeval {

enum class EncoderKind { kBiGru, kMaxPool, kMeanPool };

inline std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kBiGru: return "bigru";
    case EncoderKind::kMaxPool: return "max";
    case EncoderKind::kMeanPool: return "mean";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(std::string_view text) {
  if (text == "bigru") return EncoderKind::kBiGru;
  if (text == "max") return EncoderKind::kMaxPool;
  if (text == "mean") return EncoderKind::kMeanPool;
  throw DomainError("unknown encoder kind '" + std::string(text) + "'");
}

template <class Scalar>
struct SentenceRep {
  Vector<Scalar> vector;
  EncoderKind encoder_kind;
};

/// Stacks a list of equal-length vectors as the columns of a matrix.
template <class Scalar>
Matrix<Scalar> stack_columns(std::span<const Vector<Scalar>> vectors) {
  if (vectors.empty()) throw DomainError("empty vector sequence");
  const Eigen::Index dim = vectors.front().size();
  Matrix<Scalar> out(dim, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) throw DomainError("ragged vector sequence");
    out.col(static_cast<Eigen::Index>(i)) = vectors[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling over token columns.

namespace detail {
template <class Derived>
void require_tokens(const Eigen::MatrixBase<Derived>& tokens) {
  if (tokens.cols() == 0) throw DomainError("cannot pool an empty sequence");
  if (tokens.rows() == 0) throw DomainError("cannot pool zero-dimensional vectors");
}
}  // namespace detail

template <class Derived>
Vector<typename Derived::Scalar> pool_max(const Eigen::MatrixBase<Derived>& tokens) {
  detail::require_tokens(tokens);
  return tokens.rowwise().maxCoeff();
}

template <class Derived>
Vector<typename Derived::Scalar> pool_mean(const Eigen::MatrixBase<Derived>& tokens) {
  detail::require_tokens(tokens);
  return tokens.rowwise().mean();
}

/// [component-wise max ; component-wise min], length 2 * dim.
template <class Derived>
Vector<typename Derived::Scalar> pool_minmax(const Eigen::MatrixBase<Derived>& tokens) {
  detail::require_tokens(tokens);
  const Eigen::Index dim = tokens.rows();
  Vector<typename Derived::Scalar> out(2 * dim);
  out.head(dim) = tokens.rowwise().maxCoeff();
  out.tail(dim) = tokens.rowwise().minCoeff();
  return out;
}

/// Gradient of pool_max with respect to the tokens. Each component's gradient
/// goes to the first column attaining the maximum.
template <class Derived, class GradDerived>
Matrix<typename Derived::Scalar> pool_max_backward(
    const Eigen::MatrixBase<Derived>& tokens,
    const Eigen::MatrixBase<GradDerived>& grad_out) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(tokens.rows(), tokens.cols());
  for (Eigen::Index k = 0; k < tokens.rows(); ++k) {
    Eigen::Index arg = 0;
    tokens.row(k).maxCoeff(&arg);
    grad(k, arg) = grad_out[k];
  }
  return grad;
}

template <class Derived, class GradDerived>
Matrix<typename Derived::Scalar> pool_mean_backward(
    const Eigen::MatrixBase<Derived>& tokens,
    const Eigen::MatrixBase<GradDerived>& grad_out) {
  using Scalar = typename Derived::Scalar;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(tokens.cols());
  return (grad_out * scale).replicate(1, tokens.cols());
}

template <class Derived, class GradDerived>
Matrix<typename Derived::Scalar> pool_minmax_backward(
    const Eigen::MatrixBase<Derived>& tokens,
    const Eigen::MatrixBase<GradDerived>& grad_out) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index dim = tokens.rows();
  Matrix<Scalar> grad = pool_max_backward(tokens, grad_out.head(dim));
  for (Eigen::Index k = 0; k < dim; ++k) {
    Eigen::Index arg = 0;
    tokens.row(k).minCoeff(&arg);
    grad(k, arg) += grad_out[dim + k];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Bidirectional GRU.
//
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r * h) + bn)
//   h' = (1 - z) * n + z * h

template <class Scalar>
struct GruCell {
  Matrix<Scalar> Wz, Wr, Wn;  // hidden x input
  Matrix<Scalar> Uz, Ur, Un;  // hidden x hidden
  Vector<Scalar> bz, br, bn;

  static GruCell zeros(Eigen::Index input_dim, Eigen::Index hidden) {
    GruCell c;
    c.Wz = c.Wr = c.Wn = Matrix<Scalar>::Zero(hidden, input_dim);
    c.Uz = c.Ur = c.Un = Matrix<Scalar>::Zero(hidden, hidden);
    c.bz = c.br = c.bn = Vector<Scalar>::Zero(hidden);
    return c;
  }

  /// Calls f(name, array) for every parameter array, in a fixed order, zipped
  /// across any number of same-shaped cells.
  template <class F, class... Cells>
  static void visit(F&& f, Cells&... cells) {
    f("Wz", cells.Wz...);
    f("Wr", cells.Wr...);
    f("Wn", cells.Wn...);
    f("Uz", cells.Uz...);
    f("Ur", cells.Ur...);
    f("Un", cells.Un...);
    f("bz", cells.bz...);
    f("br", cells.br...);
    f("bn", cells.bn...);
  }
};

template <class Scalar>
struct GruParams {
  Eigen::Index input_dim = 0;
  Eigen::Index hidden = 0;
  Eigen::Index layers = 0;
  std::vector<GruCell<Scalar>> cells;  // index 2 * layer + direction (0 fwd, 1 bwd)

  Eigen::Index output_dim() const { return 2 * hidden; }
  Eigen::Index layer_input_dim(Eigen::Index layer) const {
    return layer == 0 ? input_dim : 2 * hidden;
  }
  GruCell<Scalar>& cell(Eigen::Index layer, int direction) {
    return cells[static_cast<std::size_t>(2 * layer + direction)];
  }
  const GruCell<Scalar>& cell(Eigen::Index layer, int direction) const {
    return cells[static_cast<std::size_t>(2 * layer + direction)];
  }

  static GruParams zeros(Eigen::Index input_dim, Eigen::Index hidden,
                         Eigen::Index layers) {
    if (input_dim <= 0 || hidden <= 0 || layers <= 0) {
      throw DomainError("GRU dimensions must be positive");
    }
    GruParams p;
    p.input_dim = input_dim;
    p.hidden = hidden;
    p.layers = layers;
    for (Eigen::Index l = 0; l < layers; ++l) {
      for (int d = 0; d < 2; ++d) {
        p.cells.push_back(GruCell<Scalar>::zeros(p.layer_input_dim(l), hidden));
      }
    }
    return p;
  }
};

/// Xavier-uniform fill: U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
template <class Scalar>
void xavier_uniform(Matrix<Scalar>& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
  }
}

/// Xavier-uniform matrices and zero biases.
template <class Scalar>
GruParams<Scalar> init_gru(Eigen::Index input_dim, Eigen::Index hidden,
                           Eigen::Index layers, Rng& rng) {
  GruParams<Scalar> p = GruParams<Scalar>::zeros(input_dim, hidden, layers);
  for (auto& c : p.cells) {
    for (Matrix<Scalar>* m : {&c.Wz, &c.Wr, &c.Wn, &c.Uz, &c.Ur, &c.Un}) {
      xavier_uniform(*m, rng);
    }
  }
  return p;
}

namespace detail {

template <class Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <class Scalar>
struct GruRun {
  Matrix<Scalar> inputs;  // input x T
  Matrix<Scalar> states;  // hidden x T, state after consuming step t
  Matrix<Scalar> z, r, n; // hidden x T gate activations at step t
};

template <class Scalar>
GruRun<Scalar> run_cell(const GruCell<Scalar>& c, Matrix<Scalar> inputs,
                        bool reverse) {
  const Eigen::Index steps = inputs.cols();
  const Eigen::Index hidden = c.Uz.rows();
  GruRun<Scalar> run;
  run.states.resize(hidden, steps);
  run.z.resize(hidden, steps);
  run.r.resize(hidden, steps);
  run.n.resize(hidden, steps);
  Vector<Scalar> h = Vector<Scalar>::Zero(hidden);
  for (Eigen::Index i = 0; i < steps; ++i) {
    const Eigen::Index t = reverse ? steps - 1 - i : i;
    const auto x = inputs.col(t);
    Vector<Scalar> z = (c.Wz * x + c.Uz * h + c.bz).unaryExpr(&sigmoid<Scalar>);
    Vector<Scalar> r = (c.Wr * x + c.Ur * h + c.br).unaryExpr(&sigmoid<Scalar>);
    Vector<Scalar> n =
        (c.Wn * x + c.Un * r.cwiseProduct(h) + c.bn).array().tanh().matrix();
    h = (Vector<Scalar>::Ones(hidden) - z).cwiseProduct(n) + z.cwiseProduct(h);
    run.z.col(t) = z;
    run.r.col(t) = r;
    run.n.col(t) = n;
    run.states.col(t) = h;
  }
  run.inputs = std::move(inputs);
  return run;
}

// Backpropagation through time for one direction. `grad_states` holds the
// loss gradient with respect to each step's output state; returns the
// gradient with respect to the inputs and accumulates into `grad`.
template <class Scalar>
Matrix<Scalar> backprop_cell(const GruCell<Scalar>& c, const GruRun<Scalar>& run,
                             const Matrix<Scalar>& grad_states, bool reverse,
                             GruCell<Scalar>& grad) {
  const Eigen::Index steps = run.inputs.cols();
  const Eigen::Index hidden = c.Uz.rows();
  Matrix<Scalar> grad_inputs = Matrix<Scalar>::Zero(run.inputs.rows(), steps);
  Vector<Scalar> carry = Vector<Scalar>::Zero(hidden);
  for (Eigen::Index i = steps - 1; i >= 0; --i) {
    const Eigen::Index t = reverse ? steps - 1 - i : i;
    const Eigen::Index prev_t = reverse ? t + 1 : t - 1;
    const Vector<Scalar> h_prev =
        i == 0 ? Vector<Scalar>::Zero(hidden) : Vector<Scalar>(run.states.col(prev_t));
    const auto x = run.inputs.col(t);
    const auto z = run.z.col(t);
    const auto r = run.r.col(t);
    const auto n = run.n.col(t);

    const Vector<Scalar> dh = grad_states.col(t) + carry;
    const Vector<Scalar> dn = dh.cwiseProduct(Vector<Scalar>::Ones(hidden) - z);
    const Vector<Scalar> dz = dh.cwiseProduct(h_prev - n);
    Vector<Scalar> dh_prev = dh.cwiseProduct(z);

    const Vector<Scalar> dan =
        dn.array() * (Scalar(1) - n.array().square());
    const Vector<Scalar> rh = r.cwiseProduct(h_prev);
    grad.Wn.noalias() += dan * x.transpose();
    grad.Un.noalias() += dan * rh.transpose();
    grad.bn += dan;
    const Vector<Scalar> drh = c.Un.transpose() * dan;
    const Vector<Scalar> dr = drh.cwiseProduct(h_prev);
    dh_prev += drh.cwiseProduct(r);

    const Vector<Scalar> daz = dz.array() * z.array() * (Scalar(1) - z.array());
    const Vector<Scalar> dar = dr.array() * r.array() * (Scalar(1) - r.array());
    grad.Wz.noalias() += daz * x.transpose();
    grad.Uz.noalias() += daz * h_prev.transpose();
    grad.bz += daz;
    grad.Wr.noalias() += dar * x.transpose();
    grad.Ur.noalias() += dar * h_prev.transpose();
    grad.br += dar;
    dh_prev.noalias() += c.Uz.transpose() * daz + c.Ur.transpose() * dar;

    grad_inputs.col(t).noalias() =
        c.Wz.transpose() * daz + c.Wr.transpose() * dar + c.Wn.transpose() * dan;
    carry = dh_prev;
  }
  return grad_inputs;
}

}  // namespace detail

/// Forward activations of a full bidirectional stack, kept for backprop.
template <class Scalar>
struct BiGruTrace {
  std::vector<detail::GruRun<Scalar>> runs;  // index 2 * layer + direction
  Vector<Scalar> output;
};

template <class Scalar, class Derived>
BiGruTrace<Scalar> bigru_forward(const GruParams<Scalar>& params,
                                 const Eigen::MatrixBase<Derived>& tokens) {
  if (tokens.cols() == 0) throw DomainError("bigru: empty sequence");
  if (tokens.rows() != params.input_dim) {
    throw DomainError("bigru: input dimension " + std::to_string(tokens.rows()) +
                      " does not match parameters (" +
                      std::to_string(params.input_dim) + ")");
  }
  const Eigen::Index h = params.hidden;
  BiGruTrace<Scalar> trace;
  Matrix<Scalar> layer_input = tokens;
  for (Eigen::Index l = 0; l < params.layers; ++l) {
    trace.runs.push_back(detail::run_cell(params.cell(l, 0), layer_input, false));
    trace.runs.push_back(detail::run_cell(params.cell(l, 1), layer_input, true));
    const auto& fwd = trace.runs[trace.runs.size() - 2].states;
    const auto& bwd = trace.runs.back().states;
    layer_input.resize(2 * h, tokens.cols());
    layer_input.topRows(h) = fwd;
    layer_input.bottomRows(h) = bwd;
  }
  const auto& fwd = trace.runs[trace.runs.size() - 2].states;
  const auto& bwd = trace.runs.back().states;
  trace.output.resize(2 * h);
  trace.output.head(h) = fwd.col(tokens.cols() - 1);
  trace.output.tail(h) = bwd.col(0);
  return trace;
}

/// [forward final state ; backward final state] of the top layer.
template <class Scalar, class Derived>
SentenceRep<Scalar> bigru_encode(const GruParams<Scalar>& params,
                                 const Eigen::MatrixBase<Derived>& tokens) {
  return {bigru_forward(params, tokens).output, EncoderKind::kBiGru};
}

/// Accumulates parameter gradients into `grad` and returns the gradient with
/// respect to the input tokens.
template <class Scalar, class GradDerived>
Matrix<Scalar> bigru_backward(const GruParams<Scalar>& params,
                              const BiGruTrace<Scalar>& trace,
                              const Eigen::MatrixBase<GradDerived>& grad_output,
                              GruParams<Scalar>& grad) {
  const Eigen::Index h = params.hidden;
  const Eigen::Index steps = trace.runs.front().inputs.cols();
  Matrix<Scalar> grad_fwd = Matrix<Scalar>::Zero(h, steps);
  Matrix<Scalar> grad_bwd = Matrix<Scalar>::Zero(h, steps);
  grad_fwd.col(steps - 1) = grad_output.head(h);
  grad_bwd.col(0) = grad_output.tail(h);
  Matrix<Scalar> grad_inputs;
  for (Eigen::Index l = params.layers - 1; l >= 0; --l) {
    const auto& run_f = trace.runs[static_cast<std::size_t>(2 * l)];
    const auto& run_b = trace.runs[static_cast<std::size_t>(2 * l + 1)];
    grad_inputs = detail::backprop_cell(params.cell(l, 0), run_f, grad_fwd, false,
                                        grad.cell(l, 0));
    grad_inputs += detail::backprop_cell(params.cell(l, 1), run_b, grad_bwd, true,
                                         grad.cell(l, 1));
    if (l > 0) {
      grad_fwd = grad_inputs.topRows(h);
      grad_bwd = grad_inputs.bottomRows(h);
    }
  }
  return grad_inputs;
}

}  // namespace dialeval
