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

#include "dialeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dialeval/error.hpp"

namespace dialeval::stats {
namespace {

using Real = long double;

// Modified Lentz evaluation of the incomplete beta continued fraction.
Real beta_continued_fraction(Real a, Real b, Real x) {
  constexpr int kMaxIterations = 200000;
  constexpr Real kEpsilon = 1e-18L;
  constexpr Real kTiny = 1e-300L;

  const Real qab = a + b;
  const Real qap = a + 1.0L;
  const Real qam = a - 1.0L;
  Real c = 1.0L;
  Real d = 1.0L - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0L / d;
  Real h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const Real m2 = 2.0L * m;
    Real aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0L + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0L + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0L / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0L + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0L + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0L / d;
    const Real delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0L) < kEpsilon) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

// I_x(a, b) given log(x) and log(1 - x) separately, so callers can supply
// both without cancellation.
Real incomplete_beta_logs(Real a, Real b, Real x, Real log_x, Real log_1mx) {
  if (x <= 0.0L) return 0.0L;
  if (x >= 1.0L) return 1.0L;
  const Real log_front = a * log_x + b * log_1mx - std::lgamma(a) -
                         std::lgamma(b) + std::lgamma(a + b);
  const Real front = std::exp(log_front);
  if (x < (a + 1.0L) / (a + b + 2.0L)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0L - front * beta_continued_fraction(b, a, 1.0L - x) / b;
}

void require_pair(std::span<const double> x, std::span<const double> y,
                  const char* what) {
  if (x.size() != y.size()) {
    throw DomainError(std::string(what) + ": length mismatch (" +
                      std::to_string(x.size()) + " vs " +
                      std::to_string(y.size()) + ")");
  }
  if (x.size() < 3) {
    throw DomainError(std::string(what) + ": need at least 3 observations");
  }
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("incomplete_beta: shape parameters must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const Real xl = x;
  return static_cast<double>(
      incomplete_beta_logs(a, b, xl, std::log(xl), std::log1p(-xl)));
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw DomainError("student_t_sf: df must be positive");
  if (std::isnan(t)) throw NumericError("student_t_sf: t is NaN");
  if (t == 0.0) return 0.5;
  if (std::isinf(t)) return t > 0.0 ? 0.0 : 1.0;
  // P(|T| > |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2).
  const Real tt = static_cast<Real>(t) * t;
  const Real n = df;
  const Real x = n / (n + tt);
  const Real log_x = -std::log1p(tt / n);
  const Real log_1mx = std::log(tt) - std::log(n + tt);
  const Real two_sided = incomplete_beta_logs(n / 2.0L, 0.5L, x, log_x, log_1mx);
  const Real upper = 0.5L * two_sided;
  return static_cast<double>(t > 0.0 ? upper : 1.0L - upper);
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) throw DomainError("correlation_p_value: need n >= 3");
  const double magnitude = std::fabs(r);
  if (magnitude >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = magnitude * std::sqrt(df / ((1.0 - magnitude) * (1.0 + magnitude)));
  return std::clamp(2.0 * student_t_sf(t, df), 0.0, 1.0);
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "pearson");
  const double n = static_cast<double>(x.size());
  const double mean_x = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DomainError("pearson: correlation undefined for a constant input");
  }
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {r, correlation_p_value(r, x.size())};
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // positions i..j-1 (zero-based) hold ranks i+1..j
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
    i = j;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "spearman");
  const std::vector<double> rx = fractional_ranks(x);
  const std::vector<double> ry = fractional_ranks(y);
  return pearson(rx, ry);
}

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DomainError("cosine_similarity: length mismatch");
  }
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) {
    throw DomainError("cosine_similarity: zero-norm vector");
  }
  return std::clamp(dot / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

CorrelationReport correlate(std::span<const double> scores,
                            std::span<const double> human) {
  const Correlation p = pearson(scores, human);
  const Correlation s = spearman(scores, human);
  CorrelationReport report;
  report.pearson_r = p.coefficient;
  report.pearson_p = p.p_value;
  report.spearman_rho = s.coefficient;
  report.spearman_p = s.p_value;
  report.cosine_sim = cosine_similarity(scores, human);
  report.n = scores.size();
  return report;
}

}  // namespace dialeval::stats
