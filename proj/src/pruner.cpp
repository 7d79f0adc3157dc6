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

#include "ckaprune/pruner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <tuple>

#include "ckaprune/error.hpp"
#include "ckaprune/rng.hpp"

namespace ckaprune {

const char* to_string(ReferenceMode mode) {
  return mode == ReferenceMode::Refresh ? "refresh" : "original";
}

ReferenceMode reference_mode_from_string(const std::string& s) {
  if (s == "refresh") return ReferenceMode::Refresh;
  if (s == "original") return ReferenceMode::Original;
  fail(ErrorKind::InvalidArgument, "reference must be \"refresh\" or \"original\", got \"" + s + "\"");
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TOOLKIT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ScoringResult score_candidates(const ResidualNet& net, const Matrix& x_score,
                               const KernelKind& kernel, StageCap cap, std::size_t threads,
                               const Matrix* reference) {
  const auto candidates = candidate_blocks(net, cap);
  if (candidates.empty()) fail(ErrorKind::NotPrunable, "nothing prunable: no candidate blocks left");
  require(x_score.rows() >= 2, ErrorKind::InvalidArgument,
          "scoring needs at least 2 samples, got " + std::to_string(x_score.rows()));

  ScoringResult result;
  Matrix own_reference;
  if (!reference) {
    own_reference = representation(net, x_score);
    reference = &own_reference;
    ++result.extractions;
  }
  require(reference->rows() == x_score.rows(), ErrorKind::DimensionMismatch,
          "reference representation has " + reference->shape() + " for " +
              std::to_string(x_score.rows()) + " samples");

  result.scores.resize(candidates.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> removals{0};
  std::atomic<std::size_t> extractions{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      try {
        const ResidualNet pruned = remove_block(net, candidates[i], cap);
        ++removals;
        const Matrix r_pruned = representation(pruned, x_score);
        ++extractions;
        result.scores[i] = {candidates[i], layer_score(*reference, r_pruned, kernel)};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), candidates.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  result.removals = removals;
  result.extractions += extractions;
  return result;
}

std::size_t select_victim(std::span<const CandidateScore> scores) {
  require(!scores.empty(), ErrorKind::NotPrunable, "nothing prunable: empty score list");
  auto key = [](const CandidateScore& c) {
    return std::make_tuple(c.similarity.degenerate, c.similarity.score, c.id);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (key(scores[i]) < key(scores[best])) best = i;
  return best;
}

PruneStep prune_one(const ResidualNet& net, const Matrix& x_score, const KernelKind& kernel,
                    StageCap cap, std::size_t threads, const Matrix* reference) {
  ScoringResult scored = score_candidates(net, x_score, kernel, cap, threads, reference);
  const BlockId victim = scored.scores[select_victim(scored.scores)].id;
  PruneStep step{remove_block(net, victim, cap), {}};
  step.record.scores = std::move(scored.scores);
  step.record.removed = victim;
  step.record.before = count_flops(net);
  step.record.after = count_flops(step.net);
  return step;
}

void PruneConfig::validate() const {
  require(iterations >= 1, ErrorKind::InvalidArgument, "prune.iterations must be >= 1");
  require(score_sample_count >= 2, ErrorKind::InvalidArgument,
          "prune.score_sample_count must be >= 2");
  if (kernel.bandwidth)
    require(*kernel.bandwidth > 0.0, ErrorKind::InvalidArgument,
            "prune.kernel bandwidth must be positive");
  finetune.validate();
}

Matrix scoring_sample(const Dataset& train, const PruneConfig& cfg) {
  const auto rows = stratified_sample(train, cfg.score_sample_count, derive_seed(cfg.seed, 0x5C0E));
  return subset(train, rows).x;
}

PruneResult prune_iterative(const ResidualNet& net, const DataSplit& data,
                            const PruneConfig& cfg, const IterationCallback& on_iteration) {
  cfg.validate();
  const std::size_t threads = resolve_threads(cfg.threads);
  const Matrix x_score = scoring_sample(data.train, cfg);

  Matrix frozen;
  if (cfg.reference == ReferenceMode::Original) frozen = representation(net, x_score);
  const Matrix* reference = cfg.reference == ReferenceMode::Original ? &frozen : nullptr;

  PruneResult result{net, {}};
  PruneTrace& trace = result.trace;
  trace.config = cfg;
  trace.initial = count_flops(net);
  trace.initial_accuracy = evaluate(net, data.test);
  double current_acc = trace.initial_accuracy;

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    if (candidate_blocks(result.net, cfg.stage_cap).empty()) {
      trace.truncated = true;
      break;
    }
    PruneStep step = prune_one(result.net, x_score, cfg.kernel, cfg.stage_cap, threads, reference);
    step.record.iteration = it;
    step.record.acc_before = current_acc;
    step.record.acc_after_removal = evaluate(step.net, data.test);
    TrainConfig ft = cfg.finetune;
    ft.seed = derive_seed(cfg.finetune.seed, it);
    result.net = finetune(step.net, data.train, ft);
    current_acc = evaluate(result.net, data.test);
    step.record.acc_after_finetune = current_acc;
    trace.records.push_back(std::move(step.record));
    if (on_iteration) on_iteration(trace.records.back(), result.net);
  }
  trace.final = count_flops(result.net);
  trace.final_accuracy = current_acc;
  return result;
}

ResidualNet l1_filter_prune_units(const ResidualNet& net, std::size_t units) {
  struct Unit {
    double norm;
    std::size_t stage, block, index;
  };
  std::vector<Unit> all;
  for (std::size_t s = 0; s < net.stages.size(); ++s)
    for (std::size_t b = 0; b < net.stages[s].blocks.size(); ++b) {
      const Affine& expand = net.stages[s].blocks[b].expand;
      for (std::size_t j = 0; j < expand.out(); ++j) {
        double norm = 0.0;
        for (double w : expand.weight.row(j)) norm += std::abs(w);
        all.push_back({norm, s, b, j});
      }
    }
  require(units <= all.size(), ErrorKind::InvalidArgument,
          "cannot prune " + std::to_string(units) + " of " + std::to_string(all.size()) +
              " hidden units");
  std::sort(all.begin(), all.end(), [](const Unit& a, const Unit& b) {
    return std::tie(a.norm, a.stage, a.block, a.index) < std::tie(b.norm, b.stage, b.block, b.index);
  });

  std::vector<std::vector<std::vector<bool>>> drop(net.stages.size());
  for (std::size_t s = 0; s < net.stages.size(); ++s)
    for (const Block& b : net.stages[s].blocks) drop[s].emplace_back(b.hidden(), false);
  for (std::size_t u = 0; u < units; ++u) drop[all[u].stage][all[u].block][all[u].index] = true;

  ResidualNet out = net;
  for (std::size_t s = 0; s < out.stages.size(); ++s) {
    for (std::size_t b = 0; b < out.stages[s].blocks.size(); ++b) {
      const auto& mask = drop[s][b];
      const auto keep = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), false));
      if (keep == mask.size()) continue;
      Block& blk = out.stages[s].blocks[b];
      if (keep == 0)
        fail(ErrorKind::InvalidArgument,
             "l1 filter pruning would empty block " + to_string(BlockId{s, blk.position}));
      const std::size_t width = out.stages[s].width;
      Affine expand{Matrix(keep, width), {}};
      Affine project{Matrix(width, keep), blk.project.bias};
      std::size_t k = 0;
      for (std::size_t j = 0; j < mask.size(); ++j) {
        if (mask[j]) continue;
        std::copy_n(blk.expand.weight.row(j).begin(), width, expand.weight.row(k).begin());
        expand.bias.push_back(blk.expand.bias[j]);
        for (std::size_t r = 0; r < width; ++r) project.weight(r, k) = blk.project.weight(r, j);
        ++k;
      }
      blk.expand = std::move(expand);
      blk.project = std::move(project);
    }
  }
  return out;
}

ResidualNet l1_filter_prune(const ResidualNet& net, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::InvalidArgument,
          "l1 pruning fraction must lie in (0, 1)");
  const auto units =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(hidden_units(net))));
  return l1_filter_prune_units(net, units);
}

std::pair<ResidualNet, BlockId> random_layer_prune(const ResidualNet& net, std::uint64_t seed,
                                                   StageCap cap) {
  const auto candidates = candidate_blocks(net, cap);
  if (candidates.empty()) fail(ErrorKind::NotPrunable, "nothing prunable: no candidate blocks left");
  Rng rng(seed);
  const BlockId pick = candidates[rng.below(candidates.size())];
  return {remove_block(net, pick, cap), pick};
}

std::vector<OracleEntry> oracle_rank(const ResidualNet& net, const DataSplit& data,
                                     const TrainConfig& finetune_cfg, StageCap cap) {
  const auto candidates = candidate_blocks(net, cap);
  if (candidates.empty()) fail(ErrorKind::NotPrunable, "nothing prunable: no candidate blocks left");
  std::vector<OracleEntry> out;
  for (const BlockId& id : candidates) {
    const ResidualNet tuned = finetune(remove_block(net, id, cap), data.train, finetune_cfg);
    out.push_back({id, evaluate(tuned, data.test)});
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace ckaprune
