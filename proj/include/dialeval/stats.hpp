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

#include <cstddef>
#include <span>
#include <vector>

namespace dialeval::stats {

struct Correlation {
  double coefficient = 0.0;
  double p_value = 1.0;
};

struct CorrelationReport {
  double pearson_r = 0.0;
  double pearson_p = 1.0;
  double spearman_rho = 0.0;
  double spearman_p = 1.0;
  double cosine_sim = 0.0;
  std::size_t n = 0;
};

/// Upper-tail probability P(T > t) of Student's t with `df` degrees of
/// freedom, from the regularized incomplete beta function.
double student_t_sf(double t, double df);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a sample correlation `r` over `n` observations
/// (t = r * sqrt((n - 2) / (1 - r^2)), n - 2 degrees of freedom).
double correlation_p_value(double r, std::size_t n);

/// Sample Pearson correlation with two-sided p-value. Throws DomainError on
/// length mismatch, n < 3, or a constant argument.
Correlation pearson(std::span<const double> x, std::span<const double> y);

/// Ranks 1..n; tied values share the mean of the positions they occupy.
std::vector<double> fractional_ranks(std::span<const double> x);

/// Pearson correlation of fractional ranks.
Correlation spearman(std::span<const double> x, std::span<const double> y);

/// dot(x, y) / (|x| |y|). Throws DomainError on a zero-norm argument.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

CorrelationReport correlate(std::span<const double> scores,
                            std::span<const double> human);

}  // namespace dialeval::stats
