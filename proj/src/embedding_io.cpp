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

#include "dialeval/embedding_io.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dialeval/error.hpp"
#include "dialeval/rng.hpp"

namespace dialeval {
namespace {

bool has_gz_suffix(const std::filesystem::path& path) {
  return path.extension() == ".gz";
}

std::string lowercase(std::string_view token) {
  std::string out(token);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw FormatError("line " + std::to_string(line_no) + ": bad number '" +
                      std::string(field) + "'");
  }
  if (!std::isfinite(value)) {
    throw FormatError("line " + std::to_string(line_no) + ": non-finite value");
  }
  return value;
}

template <class Int>
Int parse_count(std::string_view field, const char* what) {
  Int value{};
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError(std::string("malformed header: bad ") + what);
  }
  return value;
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(' ', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

// Splits on '\n'; a trailing newline does not produce an extra empty line.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    lines.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return lines;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", value);
  return buf;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  if (has_gz_suffix(path)) {
    gzFile file = gzopen(path.c_str(), "rb");
    if (file == nullptr) {
      throw std::runtime_error("cannot open " + path.string());
    }
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(file, buf, sizeof buf)) > 0) out.append(buf, n);
    const bool failed = n < 0;
    gzclose(file);
    if (failed) throw FormatError("corrupt gzip stream in " + path.string());
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// EmbeddingTable

EmbeddingTable::EmbeddingTable(std::size_t dim, std::uint64_t seed)
    : dim_(dim), unk_(dim) {
  if (dim == 0) throw DomainError("embedding dimension must be positive");
  Rng rng(derive_seed(seed, "unk"));
  for (Eigen::Index i = 0; i < unk_.size(); ++i) unk_[i] = rng.uniform(-0.01, 0.01);
}

bool EmbeddingTable::contains(std::string_view token) const {
  return index_.contains(lowercase(token));
}

Eigen::Ref<const VectorXd> EmbeddingTable::lookup(std::string_view token) const {
  const auto it = index_.find(lowercase(token));
  if (it == index_.end()) return unk_;
  return vectors_[it->second];
}

MatrixXd EmbeddingTable::embed(std::span<const std::string> tokens) const {
  MatrixXd out(dim_, tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = lookup(tokens[i]);
  }
  return out;
}

void EmbeddingTable::insert(std::string_view token,
                            const Eigen::Ref<const VectorXd>& vector) {
  if (static_cast<std::size_t>(vector.size()) != dim_) {
    throw FormatError("vector for '" + std::string(token) + "' has " +
                      std::to_string(vector.size()) + " components, expected " +
                      std::to_string(dim_));
  }
  if (!vector.allFinite()) {
    throw FormatError("non-finite vector for '" + std::string(token) + "'");
  }
  std::string key = lowercase(token);
  if (index_.contains(key)) {
    throw FormatError("duplicate token '" + std::string(token) + "'");
  }
  index_.emplace(std::move(key), vectors_.size());
  vectors_.emplace_back(vector);
}

EmbeddingTable parse_static_table(std::string_view text, std::uint64_t seed) {
  const std::vector<std::string_view> lines = split_lines(text);
  if (lines.empty()) throw FormatError("malformed header: empty file");
  const std::vector<std::string_view> header = split_spaces(lines[0]);
  if (header.size() != 2) {
    throw FormatError("malformed header: expected '<count> <dim>'");
  }
  const auto count = parse_count<std::size_t>(header[0], "count");
  const auto dim = parse_count<std::size_t>(header[1], "dim");
  if (dim == 0) throw FormatError("malformed header: dim must be positive");
  if (lines.size() - 1 != count) {
    throw FormatError("header declares " + std::to_string(count) +
                      " entries, file has " + std::to_string(lines.size() - 1));
  }

  EmbeddingTable table(dim, seed);
  VectorXd vector(dim);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::vector<std::string_view> fields = split_spaces(lines[i]);
    if (fields.size() != dim + 1) {
      throw FormatError("line " + std::to_string(i + 1) + ": expected " +
                        std::to_string(dim + 1) + " fields, found " +
                        std::to_string(fields.size()));
    }
    const std::string_view token = fields[0];
    if (token.empty() ||
        token.find_first_of("\t\r\v\f") != std::string_view::npos) {
      throw FormatError("line " + std::to_string(i + 1) + ": invalid token");
    }
    for (std::size_t k = 0; k < dim; ++k) {
      vector[static_cast<Eigen::Index>(k)] = parse_double(fields[k + 1], i + 1);
    }
    table.insert(token, vector);
  }
  return table;
}

EmbeddingTable load_static_table(const std::filesystem::path& path,
                                 std::uint64_t seed) {
  return parse_static_table(read_text_file(path), seed);
}

// ---------------------------------------------------------------------------
// ContextualStore

bool ContextualStore::contains(std::string_view uid) const {
  return index_.contains(std::string(uid));
}

const ContextualRecord& ContextualStore::record(std::string_view uid) const {
  const auto it = index_.find(std::string(uid));
  if (it == index_.end()) {
    throw std::out_of_range("unknown utterance uid '" + std::string(uid) + "'");
  }
  return records_[it->second];
}

const MatrixXd& ContextualStore::utterance_vectors(std::string_view uid) const {
  return record(uid).vectors;
}

void ContextualStore::insert(ContextualRecord record) {
  if (record.tokens.empty()) {
    throw FormatError("record '" + record.uid + "' has an empty token list");
  }
  if (static_cast<std::size_t>(record.vectors.cols()) != record.tokens.size()) {
    throw FormatError("record '" + record.uid + "': " +
                      std::to_string(record.tokens.size()) + " tokens but " +
                      std::to_string(record.vectors.cols()) + " vectors");
  }
  if (static_cast<std::size_t>(record.vectors.rows()) != dim_) {
    throw FormatError("record '" + record.uid + "': vector dimension " +
                      std::to_string(record.vectors.rows()) + ", expected " +
                      std::to_string(dim_));
  }
  if (!record.vectors.allFinite()) {
    throw FormatError("record '" + record.uid + "' has non-finite values");
  }
  if (index_.contains(record.uid)) {
    throw FormatError("duplicate uid '" + record.uid + "'");
  }
  index_.emplace(record.uid, records_.size());
  records_.push_back(std::move(record));
}

bool ContextualStore::operator==(const ContextualStore& other) const {
  if (dim_ != other.dim_ || records_.size() != other.records_.size()) return false;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const ContextualRecord& a = records_[i];
    const ContextualRecord& b = other.records_[i];
    if (a.uid != b.uid || a.tokens != b.tokens || a.vectors != b.vectors) return false;
  }
  return true;
}

ContextualStore parse_contextual_dump(std::string_view text) {
  std::optional<ContextualStore> store;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json object;
    try {
      object = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!object.is_object() || !object.contains("uid") ||
        !object.contains("tokens") || !object.contains("vectors") ||
        !object["uid"].is_string() || !object["tokens"].is_array() ||
        !object["vectors"].is_array()) {
      throw FormatError(where + "expected fields uid, tokens, vectors");
    }
    ContextualRecord record;
    record.uid = object["uid"].get<std::string>();
    for (const auto& token : object["tokens"]) {
      if (!token.is_string()) throw FormatError(where + "token is not a string");
      record.tokens.push_back(token.get<std::string>());
    }
    const auto& vectors = object["vectors"];
    if (vectors.size() != record.tokens.size()) {
      throw FormatError(where + std::to_string(record.tokens.size()) +
                        " tokens but " + std::to_string(vectors.size()) +
                        " vectors");
    }
    if (record.tokens.empty()) throw FormatError(where + "empty token list");
    if (!vectors[0].is_array() || vectors[0].empty()) {
      throw FormatError(where + "vector must be a non-empty array");
    }
    if (!store) store.emplace(vectors[0].size());
    const std::size_t dim = store->dim();
    record.vectors.resize(static_cast<Eigen::Index>(dim),
                          static_cast<Eigen::Index>(vectors.size()));
    for (std::size_t t = 0; t < vectors.size(); ++t) {
      const auto& vec = vectors[t];
      if (!vec.is_array() || vec.size() != dim) {
        throw FormatError(where + "ragged vector (expected " +
                          std::to_string(dim) + " components)");
      }
      for (std::size_t k = 0; k < dim; ++k) {
        if (!vec[k].is_number()) throw FormatError(where + "non-numeric component");
        const double value = vec[k].get<double>();
        if (!std::isfinite(value)) throw FormatError(where + "non-finite component");
        record.vectors(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = value;
      }
    }
    try {
      store->insert(std::move(record));
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
  }
  if (!store) throw FormatError("contextual dump contains no records");
  return std::move(*store);
}

ContextualStore load_contextual_dump(const std::filesystem::path& path) {
  return parse_contextual_dump(read_text_file(path));
}

std::string serialize_contextual_dump(const ContextualStore& store) {
  std::string out;
  for (const ContextualRecord& record : store.records()) {
    out += "{\"uid\":";
    out += nlohmann::json(record.uid).dump();
    out += ",\"tokens\":";
    out += nlohmann::json(record.tokens).dump();
    out += ",\"vectors\":[";
    for (Eigen::Index t = 0; t < record.vectors.cols(); ++t) {
      if (t > 0) out += ',';
      out += '[';
      for (Eigen::Index k = 0; k < record.vectors.rows(); ++k) {
        if (k > 0) out += ',';
        out += format_number(record.vectors(k, t));
      }
      out += ']';
    }
    out += "]}\n";
  }
  return out;
}

void write_contextual_dump(const ContextualStore& store,
                           const std::filesystem::path& path) {
  const std::string text = serialize_contextual_dump(store);
  if (has_gz_suffix(path)) {
    gzFile file = gzopen(path.c_str(), "wb");
    if (file == nullptr) throw std::runtime_error("cannot write " + path.string());
    const int written = gzwrite(file, text.data(), static_cast<unsigned>(text.size()));
    gzclose(file);
    if (written != static_cast<int>(text.size())) {
      throw std::runtime_error("short gzip write to " + path.string());
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// EmbeddingSource

std::string_view to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::kStatic ? "static" : "contextual";
}

EmbeddingKind parse_embedding_kind(std::string_view text) {
  if (text == "static") return EmbeddingKind::kStatic;
  if (text == "contextual") return EmbeddingKind::kContextual;
  throw FormatError("unknown embedding kind '" + std::string(text) + "'");
}

EmbeddingKind EmbeddingSource::kind() const {
  return std::holds_alternative<EmbeddingTable>(source_) ? EmbeddingKind::kStatic
                                                         : EmbeddingKind::kContextual;
}

std::size_t EmbeddingSource::dim() const {
  return std::visit([](const auto& s) { return s.dim(); }, source_);
}

MatrixXd EmbeddingSource::resolve(std::string_view uid,
                                  std::span<const std::string> tokens) const {
  if (const auto* t = table()) {
    if (tokens.empty()) {
      throw DomainError("utterance '" + std::string(uid) + "' has no tokens");
    }
    return t->embed(tokens);
  }
  return store()->utterance_vectors(uid);
}

EmbeddingSource load_embedding_source(const std::filesystem::path& path,
                                      std::uint64_t seed) {
  std::string text = read_text_file(path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  const bool contextual =
      has_gz_suffix(path) || (first != std::string::npos && text[first] == '{');
  if (contextual) return EmbeddingSource(parse_contextual_dump(text));
  return EmbeddingSource(parse_static_table(text, seed));
}

}  // namespace dialeval
