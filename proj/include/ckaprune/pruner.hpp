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
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ckaprune/network.hpp"
#include "ckaprune/similarity.hpp"
#include "ckaprune/training.hpp"

namespace ckaprune {

struct CandidateScore {
  BlockId id;
  SimilarityScore similarity;
};

struct ScoringResult {
  std::vector<CandidateScore> scores;  // candidate order (stage, position)
  std::size_t removals = 0;            // temporary nets built
  std::size_t extractions = 0;         // representation passes, reference included
};

/// Where the reference representation comes from on later iterations.
enum class ReferenceMode {
  Refresh,   // re-extracted from the current fine-tuned net
  Original,  // frozen representation of the unpruned input net
};

const char* to_string(ReferenceMode mode);
ReferenceMode reference_mode_from_string(const std::string& s);

/// Resolves a requested worker count; 0 reads TOOLKIT_THREADS and falls
/// back to the hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

/// Scores every candidate block by 1 - CKA between the representation of
/// \p net and that of the net with the block removed, without any
/// fine-tuning. \p reference overrides the representation of \p net.
ScoringResult score_candidates(const ResidualNet& net, const Matrix& x_score,
                               const KernelKind& kernel = {},
                               StageCap cap = StageCap::KMinus2, std::size_t threads = 1,
                               const Matrix* reference = nullptr);

/// Index of the block to remove: lowest score, degenerate scores ranked
/// after all others, ties to the lowest (stage, position).
std::size_t select_victim(std::span<const CandidateScore> scores);

struct PruneRecord {
  std::size_t iteration = 0;
  std::vector<CandidateScore> scores;
  BlockId removed;
  double acc_before = 0.0;
  double acc_after_removal = 0.0;
  double acc_after_finetune = 0.0;
  FlopCount before;
  FlopCount after;
};

struct PruneStep {
  ResidualNet net;
  PruneRecord record;  // accuracy fields left at zero
};

PruneStep prune_one(const ResidualNet& net, const Matrix& x_score, const KernelKind& kernel = {},
                    StageCap cap = StageCap::KMinus2, std::size_t threads = 1,
                    const Matrix* reference = nullptr);

struct PruneConfig {
  std::size_t iterations = 1;
  std::size_t score_sample_count = 512;
  KernelKind kernel;
  TrainConfig finetune;
  StageCap stage_cap = StageCap::KMinus2;
  ReferenceMode reference = ReferenceMode::Refresh;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  void validate() const;
};

/// The fixed stratified scoring sample prune_iterative() draws from the
/// training split.
Matrix scoring_sample(const Dataset& train, const PruneConfig& cfg);

struct PruneTrace {
  PruneConfig config;
  std::vector<PruneRecord> records;
  FlopCount initial;
  FlopCount final;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  bool truncated = false;  // candidates ran out before cfg.iterations
};

struct PruneResult {
  ResidualNet net;
  PruneTrace trace;
};

/// Called after each completed prune + fine-tune iteration.
using IterationCallback = std::function<void(const PruneRecord&, const ResidualNet&)>;

/// Iterates score -> remove argmin -> fine-tune. Scores use a fixed
/// seeded stratified subsample of data.train; accuracies use data.test.
PruneResult prune_iterative(const ResidualNet& net, const DataSplit& data,
                            const PruneConfig& cfg, const IterationCallback& on_iteration = {});

/// Removes the \p units hidden units with the smallest fan-in l1 norm
/// across all blocks.
ResidualNet l1_filter_prune_units(const ResidualNet& net, std::size_t units);

/// Removes floor(fraction * hidden_units(net)) units by fan-in l1 norm.
ResidualNet l1_filter_prune(const ResidualNet& net, double fraction);

std::pair<ResidualNet, BlockId> random_layer_prune(const ResidualNet& net, std::uint64_t seed,
                                                   StageCap cap = StageCap::KMinus2);

struct OracleEntry {
  BlockId id;
  double accuracy = 0.0;
};

/// Brute force: remove each candidate, fine-tune, evaluate on data.test.
/// Entries follow candidate order.
std::vector<OracleEntry> oracle_rank(const ResidualNet& net, const DataSplit& data,
                                     const TrainConfig& finetune_cfg,
                                     StageCap cap = StageCap::KMinus2);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace ckaprune
