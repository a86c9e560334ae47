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

#include "dialeval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dialeval/encoder.hpp"

namespace dialeval {

std::string_view to_string(BlendStrategy strategy) {
  switch (strategy) {
    case BlendStrategy::kMin: return "min";
    case BlendStrategy::kMax: return "max";
    case BlendStrategy::kMean: return "mean";
    case BlendStrategy::kNone: return "none";
  }
  return "?";
}

BlendStrategy parse_blend_strategy(std::string_view text) {
  if (text == "min") return BlendStrategy::kMin;
  if (text == "max") return BlendStrategy::kMax;
  if (text == "mean") return BlendStrategy::kMean;
  if (text == "none") return BlendStrategy::kNone;
  throw DomainError("unknown blend strategy '" + std::string(text) + "'");
}

std::string_view to_string(RefPooling pooling) {
  switch (pooling) {
    case RefPooling::kMinMax: return "minmax";
    case RefPooling::kMax: return "max";
    case RefPooling::kMean: return "mean";
  }
  return "?";
}

RefPooling parse_ref_pooling(std::string_view text) {
  if (text == "minmax") return RefPooling::kMinMax;
  if (text == "max") return RefPooling::kMax;
  if (text == "mean") return RefPooling::kMean;
  throw DomainError("unknown referenced pooling '" + std::string(text) + "'");
}

double unreferenced_score(const UnrefModel<double>& model, const MatrixXd& query,
                          const MatrixXd& response) {
  return mlp_forward(model, encode(model, query), encode(model, response));
}

double referenced_score(const MatrixXd& generated, const MatrixXd& reference,
                        RefPooling pooling) {
  if (generated.rows() != reference.rows()) {
    throw DomainError("referenced_score: embedding dimensions differ");
  }
  const auto pool = [pooling](const MatrixXd& tokens) -> VectorXd {
    switch (pooling) {
      case RefPooling::kMax: return pool_max(tokens);
      case RefPooling::kMean: return pool_mean(tokens);
      case RefPooling::kMinMax: break;
    }
    return pool_minmax(tokens);
  };
  const VectorXd g = pool(generated);
  const VectorXd r = pool(reference);
  const double norms = g.norm() * r.norm();
  if (norms == 0.0) throw DomainError("referenced_score: zero-norm pooled vector");
  return std::clamp(g.dot(r) / norms, -1.0, 1.0);
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out(scores.size(), 0.5);
  if (range > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out[i] = std::clamp((scores[i] - min) / range, 0.0, 1.0);
    }
  }
  return out;
}

double blend(double unref_norm, double ref_norm, BlendStrategy strategy) {
  switch (strategy) {
    case BlendStrategy::kMin: return std::min(unref_norm, ref_norm);
    case BlendStrategy::kMax: return std::max(unref_norm, ref_norm);
    case BlendStrategy::kMean: return 0.5 * (unref_norm + ref_norm);
    case BlendStrategy::kNone: return unref_norm;
  }
  return unref_norm;
}

std::vector<ScoredRecord> score_records(const MetricConfig& config,
                                        std::span<const EvalRecord> records) {
  if (config.model == nullptr || config.unref_source == nullptr) {
    throw DomainError("score_records: model and embedding source are required");
  }
  const EmbeddingSource& unref_source = *config.unref_source;
  const EmbeddingSource& ref_source =
      config.ref_source != nullptr ? *config.ref_source : unref_source;
  if (static_cast<Eigen::Index>(unref_source.dim()) != config.model->config.input_dim) {
    throw DomainError("embedding dimension " + std::to_string(unref_source.dim()) +
                      " does not match the model input dimension " +
                      std::to_string(config.model->config.input_dim));
  }
  const auto resolve = [](const EmbeddingSource& source, const EvalRecord& record,
                          const Utterance& u) {
    try {
      return source.resolve(u.uid, u.tokens);
    } catch (const std::out_of_range&) {
      throw FormatError("record " + std::to_string(record.index) + ": utterance '" + u.uid +
                        "' missing from embedding source");
    }
  };

  std::vector<ScoredRecord> scored(records.size());
  std::vector<double> unref(records.size());
  std::vector<double> ref(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& record = records[i];
    ScoredRecord& out = scored[i];
    out.index = record.index;
    // Resolved one at a time so a missing utterance is reported in a fixed order.
    const MatrixXd query = resolve(unref_source, record, record.query);
    const MatrixXd generated = resolve(unref_source, record, record.generated);
    out.unref_raw = unreferenced_score(*config.model, query, generated);
    const MatrixXd ref_generated = resolve(ref_source, record, record.generated);
    const MatrixXd reference = resolve(ref_source, record, record.reference);
    out.ref_raw = referenced_score(ref_generated, reference, config.ref_pooling);
    out.human = aggregate_ratings(record.ratings);
    unref[i] = out.unref_raw;
    ref[i] = out.ref_raw;
  }
  const std::vector<double> unref_norm = normalize_scores(unref);
  const std::vector<double> ref_norm = normalize_scores(ref);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    scored[i].unref_norm = unref_norm[i];
    scored[i].ref_norm = ref_norm[i];
    scored[i].blended = blend(unref_norm[i], ref_norm[i], config.blend);
  }
  return scored;
}

std::vector<double> metric_scores(std::span<const ScoredRecord> scored) {
  std::vector<double> out;
  out.reserve(scored.size());
  for (const ScoredRecord& s : scored) out.push_back(s.blended);
  return out;
}

std::vector<double> human_scores(std::span<const ScoredRecord> scored) {
  std::vector<double> out;
  out.reserve(scored.size());
  for (const ScoredRecord& s : scored) out.push_back(s.human);
  return out;
}

std::string serialize_scored_tsv(std::span<const ScoredRecord> scored) {
  std::string out = "index\tunref_raw\tref_raw\tunref_norm\tref_norm\tblended\thuman\n";
  char line[256];
  for (const ScoredRecord& s : scored) {
    std::snprintf(line, sizeof line, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", s.index,
                  s.unref_raw, s.ref_raw, s.unref_norm, s.ref_norm, s.blended, s.human);
    out += line;
  }
  return out;
}

void write_scored_tsv(std::span<const ScoredRecord> scored, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_scored_tsv(scored);
}

std::string serialize_report(const stats::CorrelationReport& report) {
  const nlohmann::json j = {{"pearson_r", report.pearson_r},
                            {"pearson_p", report.pearson_p},
                            {"spearman_rho", report.spearman_rho},
                            {"spearman_p", report.spearman_p},
                            {"cosine_sim", report.cosine_sim},
                            {"n", report.n}};
  return j.dump(2) + "\n";
}

}  // namespace dialeval
