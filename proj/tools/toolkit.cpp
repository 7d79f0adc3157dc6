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

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ckaprune/ckaprune.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int exit_code(ckap_status st) {
  switch (st) {
    case CKAP_OK: return kExitOk;
    case CKAP_ERR_CONFIG: return kExitConfig;
    default: return kExitRuntime;
  }
}

int report(ckap_status st) {
  if (st != CKAP_OK)
    std::fprintf(stderr, "toolkit: %s: %s\n", ckap_status_string(st), ckap_last_error());
  return exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer pruning for residual MLPs guided by representation similarity"};
  app.set_version_flag("--version", ckap_version());
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> checkpoints;
  std::string out_dir;
  std::uint64_t seed = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"train", "Train the unpruned network"},
      {"prune", "Iteratively remove the most redundant blocks"},
      {"eval", "Accuracy, robustness, compute and CO2 report"},
      {"latency", "Layer versus filter pruning inference speedup"},
      {"oracle", "Compare similarity scores with brute-force removal"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment config (JSON)")->required();
    sub->add_option("--checkpoint", checkpoints, "Input checkpoint(s)");
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Global seed (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();

  ckap_experiment* exp = nullptr;
  ckap_status st = ckap_experiment_open(config.c_str(), &exp);
  if (st != CKAP_OK) return report(st);
  if (sub->count("--seed") > 0) st = ckap_experiment_set_seed(exp, seed);
  if (st == CKAP_OK && !out_dir.empty()) st = ckap_experiment_set_output_dir(exp, out_dir.c_str());
  for (const auto& c : checkpoints)
    if (st == CKAP_OK) st = ckap_experiment_add_checkpoint(exp, c.c_str());
  if (st == CKAP_OK) st = ckap_experiment_run(exp, command.c_str());
  ckap_experiment_free(exp);
  return report(st);
}
