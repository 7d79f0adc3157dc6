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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "ckaprune/network.hpp"

namespace ckaprune {

// Layout: "CKAP" | u16 version | u32 header length | JSON header |
// float64 LE weights in parameter_spans() order | u32 CRC32 of weights.
// All integers little-endian.
inline constexpr char kCheckpointMagic[4] = {'C', 'K', 'A', 'P'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

nlohmann::json arch_to_json(const ArchSpec& spec);

/// Parses an ArchSpec; errors name the offending field under \p where.
ArchSpec arch_from_json(const nlohmann::json& j, const std::string& where = "arch");

std::vector<std::uint8_t> serialize(const ResidualNet& net);
ResidualNet deserialize(std::span<const std::uint8_t> bytes);

void save(const ResidualNet& net, const std::filesystem::path& path);
ResidualNet load(const std::filesystem::path& path);

}  // namespace ckaprune
