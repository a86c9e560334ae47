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

#include "dialeval/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "dialeval/embedding_io.hpp"
#include "dialeval/error.hpp"
#include "dialeval/rng.hpp"

namespace dialeval {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> tokenize(std::string_view field, std::size_t line_no,
                                  const char* column) {
  std::vector<std::string> tokens;
  for (std::string_view token : split(field, ' ')) {
    if (!token.empty()) tokens.emplace_back(token);
  }
  if (tokens.empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": empty " + column +
                      " field");
  }
  return tokens;
}

}  // namespace

namespace uid {
std::string query(std::size_t index) { return "q:" + std::to_string(index); }
std::string response(std::size_t index) { return "r:" + std::to_string(index); }
std::string eval_query(std::size_t index) { return "ctx-q:" + std::to_string(index); }
std::string generated(std::size_t index) { return "gen:" + std::to_string(index); }
std::string reference(std::size_t index) { return "ref:" + std::to_string(index); }
}  // namespace uid

std::vector<QRPair> parse_pairs(std::string_view text) {
  std::vector<QRPair> pairs;
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    const std::vector<std::string_view> columns = split(line, '\t');
    if (columns.size() != 2) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 2 columns, found " +
                        std::to_string(columns.size()));
    }
    QRPair pair;
    pair.index = pairs.size();
    pair.query = {uid::query(pair.index), tokenize(columns[0], line_no, "query")};
    pair.response = {uid::response(pair.index),
                     tokenize(columns[1], line_no, "response")};
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<QRPair> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(read_text_file(path));
}

std::vector<EvalRecord> parse_eval_records(std::string_view text) {
  std::vector<EvalRecord> records;
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const std::vector<std::string_view> columns = split(line, '\t');
    if (columns.size() != 4) {
      throw FormatError(where + "expected 4 columns, found " +
                        std::to_string(columns.size()));
    }
    EvalRecord record;
    record.index = records.size();
    record.query = {uid::eval_query(record.index), tokenize(columns[0], line_no, "query")};
    record.generated = {uid::generated(record.index),
                        tokenize(columns[1], line_no, "generated")};
    record.reference = {uid::reference(record.index),
                        tokenize(columns[2], line_no, "reference")};
    for (std::string_view field : split(columns[3], ',')) {
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) {
        field.remove_suffix(1);
      }
      int rating = 0;
      const auto [ptr, ec] =
          std::from_chars(field.data(), field.data() + field.size(), rating);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw FormatError(where + "non-integer rating '" + std::string(field) + "'");
      }
      if (rating < 1 || rating > 5) {
        throw FormatError(where + "rating " + std::to_string(rating) +
                          " outside [1, 5]");
      }
      record.ratings.push_back(rating);
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<EvalRecord> load_eval_records(const std::filesystem::path& path) {
  return parse_eval_records(read_text_file(path));
}

double aggregate_ratings(std::span<const int> ratings) {
  if (ratings.empty()) throw DomainError("aggregate_ratings: no ratings");
  const double sum = std::accumulate(ratings.begin(), ratings.end(), 0.0);
  const double mean = sum / static_cast<double>(ratings.size());
  return (mean - 1.0) / 4.0;
}

std::vector<TrainExample> sample_negatives(std::span<const QRPair> pairs,
                                           std::uint64_t seed) {
  if (pairs.size() < 2) {
    throw DomainError("sample_negatives: need at least 2 pairs");
  }
  const auto& first = pairs.front().response.tokens;
  const bool all_identical = std::all_of(pairs.begin(), pairs.end(), [&](const QRPair& p) {
    return p.response.tokens == first;
  });
  if (all_identical) {
    throw DomainError("sample_negatives: all responses are identical");
  }

  Rng rng(seed);
  std::vector<TrainExample> examples;
  examples.reserve(pairs.size());
  const std::uint64_t others = pairs.size() - 1;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t j;
    do {
      j = static_cast<std::size_t>(rng.below(others));
      if (j >= i) ++j;
    } while (pairs[j].response.tokens == pairs[i].response.tokens);
    examples.push_back({pairs[i].query, pairs[i].response, pairs[j].response});
  }
  return examples;
}

}  // namespace dialeval
