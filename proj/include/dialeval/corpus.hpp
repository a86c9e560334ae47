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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dialeval {

/// One utterance: a join key into contextual dumps plus its dataset tokens.
struct Utterance {
  std::string uid;
  std::vector<std::string> tokens;
};

struct QRPair {
  std::size_t index = 0;
  Utterance query;     // uid "q:<index>"
  Utterance response;  // uid "r:<index>"
};

struct TrainExample {
  Utterance query;
  Utterance pos_response;
  Utterance neg_response;
};

struct EvalRecord {
  std::size_t index = 0;
  Utterance query;      // uid "ctx-q:<index>"
  Utterance generated;  // uid "gen:<index>"
  Utterance reference;  // uid "ref:<index>"
  std::vector<int> ratings;
};

namespace uid {
std::string query(std::size_t index);
std::string response(std::size_t index);
std::string eval_query(std::size_t index);
std::string generated(std::size_t index);
std::string reference(std::size_t index);
}  // namespace uid

/// Tab-separated query/response pairs, tokens separated by single spaces.
std::vector<QRPair> load_pairs(const std::filesystem::path& path);
std::vector<QRPair> parse_pairs(std::string_view text);

/// Tab-separated query/generated/reference/ratings, ratings comma-separated
/// integers in [1, 5].
std::vector<EvalRecord> load_eval_records(const std::filesystem::path& path);
std::vector<EvalRecord> parse_eval_records(std::string_view text);

/// (mean(ratings) - 1) / 4.
double aggregate_ratings(std::span<const int> ratings);

/// One negative per pair, drawn uniformly from the other pairs' responses and
/// redrawn while it equals the true response token for token.
std::vector<TrainExample> sample_negatives(std::span<const QRPair> pairs,
                                           std::uint64_t seed);

}  // namespace dialeval
