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

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dialeval/model.hpp"

namespace dialeval {
namespace {

constexpr char kMagic[4] = {'U', 'N', 'R', 'F'};

template <class UInt>
void put_le(std::string& out, UInt value) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <class UInt>
UInt get_le(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(UInt) > bytes.size()) {
    throw FormatError("checkpoint truncated");
  }
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  offset += sizeof(UInt);
  return value;
}

nlohmann::json manifest_for(const UnrefModel<double>& model) {
  const ModelConfig& c = model.config;
  nlohmann::json params = nlohmann::json::array();
  ModelParams<double>::visit(
      [&](const std::string& name, const auto& a) {
        params.push_back({{"name", name}, {"shape", {a.rows(), a.cols()}}});
      },
      model.params);
  return {
      {"encoder_kind", to_string(c.encoder)},
      {"objective", to_string(c.objective)},
      {"head", head_name(c.objective)},
      {"embedding_kind", to_string(c.embedding)},
      {"seed", c.seed},
      {"dims",
       {{"input", c.input_dim},
        {"sentence", c.sentence_dim()},
        {"features", c.feature_dim()},
        {"gru_hidden", c.gru_hidden},
        {"gru_layers", c.gru_layers},
        {"mlp_hidden", c.mlp_hidden}}},
      {"layout", "f64-le column-major"},
      {"params", params},
  };
}

}  // namespace

std::string serialize_checkpoint(const UnrefModel<double>& model) {
  const std::string manifest = manifest_for(model).dump();
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(manifest.size()));
  out += manifest;
  ModelParams<double>::visit(
      [&](const std::string&, const auto& a) {
        for (Eigen::Index i = 0; i < a.size(); ++i) {
          put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(a.data()[i]));
        }
      },
      model.params);
  return out;
}

UnrefModel<double> deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint: bad magic");
  }
  std::size_t offset = sizeof kMagic;
  const auto version = get_le<std::uint16_t>(bytes, offset);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto manifest_size = get_le<std::uint32_t>(bytes, offset);
  if (offset + manifest_size > bytes.size()) throw FormatError("checkpoint truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(offset, manifest_size));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  offset += manifest_size;

  ModelConfig config;
  try {
    config.encoder = parse_encoder_kind(manifest.at("encoder_kind").get<std::string>());
    config.objective = parse_objective(manifest.at("objective").get<std::string>());
    config.embedding = parse_embedding_kind(manifest.at("embedding_kind").get<std::string>());
    config.seed = manifest.at("seed").get<std::uint64_t>();
    const auto& dims = manifest.at("dims");
    config.input_dim = dims.at("input").get<Eigen::Index>();
    config.gru_hidden = dims.at("gru_hidden").get<Eigen::Index>();
    config.gru_layers = dims.at("gru_layers").get<Eigen::Index>();
    config.mlp_hidden = dims.at("mlp_hidden").get<std::array<Eigen::Index, kMlpLayers>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }

  UnrefModel<double> model{config, ModelParams<double>::zeros(config)};
  const auto& declared = manifest.at("params");
  std::size_t index = 0;
  ModelParams<double>::visit(
      [&](const std::string& name, auto& a) {
        if (index >= declared.size() || declared[index].at("name") != name ||
            declared[index].at("shape")[0] != a.rows() ||
            declared[index].at("shape")[1] != a.cols()) {
          throw FormatError("checkpoint manifest does not match parameter '" + name + "'");
        }
        ++index;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
          a.data()[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
        }
      },
      model.params);
  if (index != declared.size() || offset != bytes.size()) {
    throw FormatError("checkpoint has trailing or undeclared data");
  }
  if (!model.params.all_finite()) throw FormatError("checkpoint has non-finite parameters");
  return model;
}

void save_checkpoint(const UnrefModel<double>& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

UnrefModel<double> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_text_file(path));
}

}  // namespace dialeval
