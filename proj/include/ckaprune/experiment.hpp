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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckaprune/evaluation.hpp"
#include "ckaprune/network.hpp"
#include "ckaprune/pruner.hpp"
#include "ckaprune/training.hpp"

namespace ckaprune {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kReportSchema = 1;

struct SyntheticSource {
  std::size_t n = 2000;
  std::size_t dim = 16;
  std::size_t classes = 4;
  double spread = 0.3;
  std::uint64_t seed = 0;
};

struct CsvSource {
  std::filesystem::path path;
  std::string label;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct LatencyConfig {
  LatencyOptions options;
  double tolerance = 0.05;
  /// Removed-block counts used by the latency command when no pruned
  /// checkpoints are passed.
  std::vector<std::size_t> layer_steps{0, 2, 4, 6};
  bool in_eval = true;
};

struct EvalConfig {
  LatencyConfig latency;
  std::vector<double> fgsm_epsilons{0.05, 0.1, 0.2};
  CorruptionConfig corruption;
  Co2Config co2;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  ArchSpec arch;
  std::optional<SyntheticSource> synthetic;
  std::optional<CsvSource> csv;
  TrainConfig train;
  PruneConfig prune;
  double l1_fraction = 0.0;  // > 0 applies l1 filter pruning after layer pruning
  EvalConfig eval;
  TrainConfig oracle_finetune;
};

/// Parses and validates a config document. Errors are ErrorKind::Config
/// and name the offending field. \p seed_override replaces "seed" before
/// any per-component seed is derived.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir = {},
                                         std::optional<std::uint64_t> seed_override = {});

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = {});

/// Resolved config, every default filled in.
nlohmann::json to_json(const ExperimentConfig& cfg);

nlohmann::json to_json(const PruneTrace& trace);
std::string trace_csv(const PruneTrace& trace);

DataSplit load_data(const ExperimentConfig& cfg);

struct RunOptions {
  std::vector<std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> output_dir;
};

/// Runs one of train, prune, eval, latency, oracle. Outputs land in the
/// output directory together with manifest.json, written last.
void run_command(const std::string& command, const ExperimentConfig& cfg,
                 const RunOptions& options);

}  // namespace ckaprune
