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

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dialeval/corpus.hpp"
#include "dialeval/embedding_io.hpp"
#include "dialeval/model.hpp"
#include "dialeval/stats.hpp"

namespace dialeval {

/// How normalized referenced and unreferenced scores are combined. `kNone`
/// reports the unreferenced score alone.
enum class BlendStrategy { kMin, kMax, kMean, kNone };

enum class RefPooling { kMinMax, kMax, kMean };

std::string_view to_string(BlendStrategy strategy);
BlendStrategy parse_blend_strategy(std::string_view text);
std::string_view to_string(RefPooling pooling);
RefPooling parse_ref_pooling(std::string_view text);

struct MetricConfig {
  const UnrefModel<double>* model = nullptr;
  const EmbeddingSource* unref_source = nullptr;  // query and generated response
  const EmbeddingSource* ref_source = nullptr;    // generated and reference response
  RefPooling ref_pooling = RefPooling::kMinMax;
  BlendStrategy blend = BlendStrategy::kMax;
};

struct ScoredRecord {
  std::size_t index = 0;
  double unref_raw = 0.0;
  double ref_raw = 0.0;
  double unref_norm = 0.0;
  double ref_norm = 0.0;
  double blended = 0.0;
  double human = 0.0;
};

double unreferenced_score(const UnrefModel<double>& model, const MatrixXd& query,
                          const MatrixXd& response);

/// Cosine similarity of the pooled generated and reference responses.
double referenced_score(const MatrixXd& generated, const MatrixXd& reference,
                        RefPooling pooling);

/// Min-max rescaling to [0, 1]; a constant list maps to 0.5 everywhere.
std::vector<double> normalize_scores(std::span<const double> scores);

double blend(double unref_norm, double ref_norm, BlendStrategy strategy);

std::vector<ScoredRecord> score_records(const MetricConfig& config,
                                        std::span<const EvalRecord> records);

/// The per-record score that is validated against human judgments.
std::vector<double> metric_scores(std::span<const ScoredRecord> scored);
std::vector<double> human_scores(std::span<const ScoredRecord> scored);

std::string serialize_scored_tsv(std::span<const ScoredRecord> scored);
void write_scored_tsv(std::span<const ScoredRecord> scored, const std::filesystem::path& path);

std::string serialize_report(const stats::CorrelationReport& report);

}  // namespace dialeval
