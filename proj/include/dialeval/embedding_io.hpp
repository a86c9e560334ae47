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
#include <unordered_map>
#include <variant>
#include <vector>

#include "dialeval/eigen_types.hpp"

namespace dialeval {

/// Static token -> vector table read from word2vec text format.
///
/// Keys are stored lowercased; two file tokens that fold to the same key are
/// rejected as duplicates. Unknown tokens map to a fixed vector drawn once
/// from U[-0.01, 0.01] with the table's seed.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }
  bool contains(std::string_view token) const;

  /// Stored vector for lowercase(token), else the UNK vector.
  Eigen::Ref<const VectorXd> lookup(std::string_view token) const;
  const VectorXd& unk_vector() const { return unk_; }

  /// dim x tokens.size() matrix of looked-up vectors.
  MatrixXd embed(std::span<const std::string> tokens) const;

  /// Throws FormatError on duplicate (case-folded) token or wrong length.
  void insert(std::string_view token, const Eigen::Ref<const VectorXd>& vector);

 private:
  std::size_t dim_;
  VectorXd unk_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<VectorXd> vectors_;
};

EmbeddingTable load_static_table(const std::filesystem::path& path,
                                 std::uint64_t seed);
EmbeddingTable parse_static_table(std::string_view text, std::uint64_t seed);

struct ContextualRecord {
  std::string uid;
  std::vector<std::string> tokens;
  MatrixXd vectors;  // dim x tokens
};

/// Per-utterance contextual vectors keyed by uid. Immutable once loaded.
class ContextualStore {
 public:
  explicit ContextualStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool contains(std::string_view uid) const;

  /// Record vectors in token order. Throws std::out_of_range on unknown uid.
  const MatrixXd& utterance_vectors(std::string_view uid) const;
  const ContextualRecord& record(std::string_view uid) const;
  const std::vector<ContextualRecord>& records() const { return records_; }

  /// Validates counts, dimension, finiteness and uid uniqueness.
  void insert(ContextualRecord record);

  bool operator==(const ContextualStore& other) const;

 private:
  std::size_t dim_;
  std::vector<ContextualRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads a JSON Lines dump; a ".gz" suffix means the stream is gzipped.
ContextualStore load_contextual_dump(const std::filesystem::path& path);
ContextualStore parse_contextual_dump(std::string_view text);

/// Writes a dump with numbers at 8 significant digits.
void write_contextual_dump(const ContextualStore& store,
                           const std::filesystem::path& path);
std::string serialize_contextual_dump(const ContextualStore& store);

enum class EmbeddingKind { kStatic, kContextual };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view text);

/// Either a static table or a contextual store, resolving utterances to
/// dim x tokens matrices. Static sources use the tokens; contextual sources
/// use the uid only.
class EmbeddingSource {
 public:
  explicit EmbeddingSource(EmbeddingTable table) : source_(std::move(table)) {}
  explicit EmbeddingSource(ContextualStore store) : source_(std::move(store)) {}

  EmbeddingKind kind() const;
  std::size_t dim() const;
  MatrixXd resolve(std::string_view uid, std::span<const std::string> tokens) const;

  const EmbeddingTable* table() const { return std::get_if<EmbeddingTable>(&source_); }
  const ContextualStore* store() const { return std::get_if<ContextualStore>(&source_); }

 private:
  std::variant<EmbeddingTable, ContextualStore> source_;
};

/// Loads a contextual dump when the path ends in ".gz" or the file starts
/// with '{'; a static table otherwise.
EmbeddingSource load_embedding_source(const std::filesystem::path& path,
                                      std::uint64_t seed);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace dialeval
