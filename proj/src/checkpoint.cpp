/*
 * Copyright 2026 The ckaprune Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ckaprune/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ckaprune/error.hpp"

namespace ckaprune {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t& offset, const char* what) {
  if (bytes.size() < offset + sizeof(T))
    fail(ErrorKind::Truncated, std::string("checkpoint truncated while reading ") + what);
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    fail(ErrorKind::Config, where + "." + key + ": missing field");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Config, where + "." + key + ": wrong type");
  }
}

}  // namespace

nlohmann::json arch_to_json(const ArchSpec& spec) {
  return {{"input_dim", spec.input_dim},
          {"stage_widths", spec.stage_widths},
          {"blocks_per_stage", spec.blocks_per_stage},
          {"num_classes", spec.num_classes},
          {"activation", "relu"},
          {"seed", spec.seed}};
}

ArchSpec arch_from_json(const nlohmann::json& j, const std::string& where) {
  ArchSpec spec;
  spec.input_dim = field<std::size_t>(j, "input_dim", where);
  spec.stage_widths = field<std::vector<std::size_t>>(j, "stage_widths", where);
  spec.blocks_per_stage = field<std::vector<std::size_t>>(j, "blocks_per_stage", where);
  spec.num_classes = field<std::size_t>(j, "num_classes", where);
  if (j.contains("seed")) spec.seed = field<std::uint64_t>(j, "seed", where);
  if (j.contains("activation") && field<std::string>(j, "activation", where) != "relu")
    fail(ErrorKind::Config, where + ".activation: only \"relu\" is supported");
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  return spec;
}

std::vector<std::uint8_t> serialize(const ResidualNet& net) {
  std::vector<std::uint8_t> weights;
  for (auto span : parameter_spans(net))
    for (double v : span) put(weights, v);

  nlohmann::json layout = nlohmann::json::array();
  for (const Stage& s : net.stages) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const Block& b : s.blocks) blocks.push_back({{"position", b.position}, {"hidden", b.hidden()}});
    layout.push_back(std::move(blocks));
  }
  nlohmann::json log = nlohmann::json::array();
  for (const BlockId& id : net.removal_log) log.push_back({id.stage, id.position});

  const nlohmann::json header = {{"arch", arch_to_json(net.spec)},
                                 {"blocks", layout},
                                 {"removal_log", log},
                                 {"weight_bytes", weights.size()}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), weights.begin(), weights.end());
  put(out, crc32_of(weights));
  return out;
}

ResidualNet deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorKind::Truncated, "checkpoint truncated while reading magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorKind::BadMagic, "not a ckaprune checkpoint (bad magic)");
  std::size_t offset = 4;
  const auto version = get<std::uint16_t>(bytes, offset, "version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::BadVersion, "unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get<std::uint32_t>(bytes, offset, "header length");
  if (bytes.size() < offset + header_len)
    fail(ErrorKind::Truncated, "checkpoint truncated inside header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + offset, bytes.begin() + offset + header_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  offset += header_len;

  ResidualNet net;
  std::size_t weight_bytes = 0;
  try {
    net.spec = arch_from_json(header.at("arch"), "header.arch");
    weight_bytes = header.at("weight_bytes").get<std::size_t>();
    const auto& layout = header.at("blocks");
    if (layout.size() != net.spec.stage_widths.size())
      fail(ErrorKind::Parse, "checkpoint block layout does not match stage count");
    net.stem.weight = Matrix(net.spec.stage_widths[0], net.spec.input_dim);
    net.stem.bias.assign(net.spec.stage_widths[0], 0.0);
    for (std::size_t s = 0; s < layout.size(); ++s) {
      Stage stage;
      stage.width = net.spec.stage_widths[s];
      for (const auto& jb : layout[s]) {
        Block b;
        b.position = jb.at("position").get<std::size_t>();
        const auto hidden = jb.at("hidden").get<std::size_t>();
        b.expand.weight = Matrix(hidden, stage.width);
        b.expand.bias.assign(hidden, 0.0);
        b.project.weight = Matrix(stage.width, hidden);
        b.project.bias.assign(stage.width, 0.0);
        stage.blocks.push_back(std::move(b));
      }
      net.stages.push_back(std::move(stage));
    }
    for (std::size_t s = 1; s < net.stages.size(); ++s) {
      Affine t;
      t.weight = Matrix(net.stages[s].width, net.stages[s - 1].width);
      t.bias.assign(net.stages[s].width, 0.0);
      net.transitions.push_back(std::move(t));
    }
    net.classifier.weight = Matrix(net.spec.num_classes, net.stages.back().width);
    net.classifier.bias.assign(net.spec.num_classes, 0.0);
    for (const auto& entry : header.at("removal_log"))
      net.removal_log.push_back({entry.at(0).get<std::size_t>(), entry.at(1).get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed checkpoint header: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Parse, std::string("malformed checkpoint header: ") + e.what());
  }

  if (weight_bytes != parameter_count(net) * sizeof(double))
    fail(ErrorKind::Parse, "checkpoint weight_bytes disagrees with the declared layout");
  if (bytes.size() < offset + weight_bytes + sizeof(std::uint32_t))
    fail(ErrorKind::Truncated, "checkpoint truncated inside weight section");
  const auto weights = bytes.subspan(offset, weight_bytes);
  for (auto span : parameter_spans(net)) {
    for (double& v : span) v = get<double>(bytes, offset, "weights");
  }
  const auto stored = get<std::uint32_t>(bytes, offset, "checksum");
  if (stored != crc32_of(weights)) fail(ErrorKind::Checksum, "checkpoint weight checksum mismatch");
  if (offset != bytes.size()) fail(ErrorKind::Parse, "trailing bytes after checkpoint checksum");
  return net;
}

void save(const ResidualNet& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

ResidualNet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace ckaprune
