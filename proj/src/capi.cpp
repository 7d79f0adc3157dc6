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

#include "ckaprune/ckaprune.h"

#include <new>
#include <optional>
#include <string>
#include <vector>

#include "ckaprune/checkpoint.hpp"
#include "ckaprune/error.hpp"
#include "ckaprune/experiment.hpp"
#include "ckaprune/network.hpp"
#include "ckaprune/pruner.hpp"
#include "ckaprune/similarity.hpp"

struct ckap_net {
  ckaprune::ResidualNet net;
};

struct ckap_experiment {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  ckaprune::RunOptions options;
};

namespace {

using namespace ckaprune;

thread_local std::string g_last_error;

ckap_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return CKAP_ERR_INVALID_ARGUMENT;
    case ErrorKind::DimensionMismatch: return CKAP_ERR_DIMENSION_MISMATCH;
    case ErrorKind::Config: return CKAP_ERR_CONFIG;
    case ErrorKind::Io: return CKAP_ERR_IO;
    case ErrorKind::BadMagic: return CKAP_ERR_BAD_MAGIC;
    case ErrorKind::BadVersion: return CKAP_ERR_BAD_VERSION;
    case ErrorKind::Truncated: return CKAP_ERR_TRUNCATED;
    case ErrorKind::Checksum: return CKAP_ERR_CHECKSUM;
    case ErrorKind::Parse: return CKAP_ERR_PARSE;
    case ErrorKind::Numeric: return CKAP_ERR_NUMERIC;
    case ErrorKind::NotPrunable: return CKAP_ERR_NOT_PRUNABLE;
    case ErrorKind::Internal: return CKAP_ERR_INTERNAL;
  }
  return CKAP_ERR_INTERNAL;
}

template <typename F>
ckap_status guard(F&& body) {
  try {
    body();
    g_last_error.clear();
    return CKAP_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return CKAP_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CKAP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CKAP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return CKAP_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " is null");
}

Matrix view(const double* x, std::size_t rows, std::size_t cols) {
  need(x, "input");
  return Matrix::from_data(rows, cols, std::vector<double>(x, x + rows * cols));
}

StageCap cap_of(ckap_stage_cap cap) {
  if (cap == CKAP_CAP_K_MINUS_2) return StageCap::KMinus2;
  if (cap == CKAP_CAP_K_MINUS_1) return StageCap::KMinus1;
  fail(ErrorKind::InvalidArgument, "unknown stage cap");
}

KernelKind kernel_of(ckap_kernel kernel, double bandwidth) {
  if (kernel == CKAP_KERNEL_LINEAR) return KernelKind::linear();
  if (kernel == CKAP_KERNEL_RBF) {
    KernelKind k = KernelKind::rbf();
    if (bandwidth > 0.0) k.bandwidth = bandwidth;
    return k;
  }
  fail(ErrorKind::InvalidArgument, "unknown kernel");
}

void copy_out(const Matrix& m, double* out) {
  need(out, "output buffer");
  std::copy(m.data().begin(), m.data().end(), out);
}

}  // namespace

extern "C" {

const char* ckap_last_error(void) { return g_last_error.c_str(); }

const char* ckap_status_string(ckap_status status) {
  switch (status) {
    case CKAP_OK: return "ok";
    case CKAP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CKAP_ERR_DIMENSION_MISMATCH: return "dimension mismatch";
    case CKAP_ERR_CONFIG: return "config error";
    case CKAP_ERR_IO: return "i/o error";
    case CKAP_ERR_BAD_MAGIC: return "bad magic";
    case CKAP_ERR_BAD_VERSION: return "unsupported version";
    case CKAP_ERR_TRUNCATED: return "truncated";
    case CKAP_ERR_CHECKSUM: return "checksum mismatch";
    case CKAP_ERR_PARSE: return "parse error";
    case CKAP_ERR_NUMERIC: return "numeric error";
    case CKAP_ERR_NOT_PRUNABLE: return "not prunable";
    case CKAP_ERR_INTERNAL: return "internal error";
    case CKAP_ERR_BUFFER_TOO_SMALL: return "buffer too small";
  }
  return "unknown status";
}

const char* ckap_version(void) { return kToolkitVersion; }

ckap_status ckap_net_build(const char* arch_json, ckap_net** out) {
  return guard([&] {
    need(arch_json, "arch_json");
    need(out, "out");
    const auto doc = nlohmann::json::parse(arch_json);
    *out = new ckap_net{build(arch_from_json(doc))};
  });
}

ckap_status ckap_net_load(const char* path, ckap_net** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ckap_net{load(path)};
  });
}

ckap_status ckap_net_save(const ckap_net* net, const char* path) {
  return guard([&] {
    need(net, "net");
    need(path, "path");
    save(net->net, path);
  });
}

void ckap_net_free(ckap_net* net) { delete net; }

ckap_status ckap_net_input_dim(const ckap_net* net, size_t* out) {
  return guard([&] {
    need(net, "net");
    need(out, "out");
    *out = net->net.spec.input_dim;
  });
}

ckap_status ckap_net_num_classes(const ckap_net* net, size_t* out) {
  return guard([&] {
    need(net, "net");
    need(out, "out");
    *out = net->net.spec.num_classes;
  });
}

ckap_status ckap_net_representation_dim(const ckap_net* net, size_t* out) {
  return guard([&] {
    need(net, "net");
    need(out, "out");
    *out = net->net.spec.stage_widths.back();
  });
}

ckap_status ckap_net_forward(const ckap_net* net, const double* x, size_t rows, size_t cols,
                             double* logits) {
  return guard([&] {
    need(net, "net");
    copy_out(forward(net->net, view(x, rows, cols)), logits);
  });
}

ckap_status ckap_net_representation(const ckap_net* net, const double* x, size_t rows,
                                    size_t cols, double* rep) {
  return guard([&] {
    need(net, "net");
    copy_out(representation(net->net, view(x, rows, cols)), rep);
  });
}

ckap_status ckap_net_count(const ckap_net* net, uint64_t* flops, uint64_t* params,
                           size_t* blocks) {
  return guard([&] {
    need(net, "net");
    const FlopCount c = count_flops(net->net);
    if (flops) *flops = c.per_sample_flops;
    if (params) *params = c.params;
    if (blocks) *blocks = net->net.block_count();
  });
}

ckap_status ckap_net_candidates(const ckap_net* net, ckap_stage_cap cap, ckap_block_id* ids,
                                size_t capacity, size_t* count) {
  ckap_status st = guard([&] {
    need(net, "net");
    need(count, "count");
    const auto c = candidate_blocks(net->net, cap_of(cap));
    *count = c.size();
    if (c.size() > capacity) return;
    if (!c.empty()) need(ids, "ids");
    for (std::size_t i = 0; i < c.size(); ++i)
      ids[i] = {static_cast<uint32_t>(c[i].stage), static_cast<uint32_t>(c[i].position)};
  });
  if (st == CKAP_OK && count && *count > capacity) {
    g_last_error = "candidate buffer holds " + std::to_string(capacity) + ", need " +
                   std::to_string(*count);
    return CKAP_ERR_BUFFER_TOO_SMALL;
  }
  return st;
}

ckap_status ckap_net_remove_block(ckap_net* net, ckap_block_id id, ckap_stage_cap cap) {
  return guard([&] {
    need(net, "net");
    net->net = remove_block(net->net, BlockId{id.stage, id.position}, cap_of(cap));
  });
}

ckap_status ckap_cka(const double* x, size_t rows, size_t x_cols, const double* y, size_t y_cols,
                     ckap_kernel kernel, double bandwidth, double* cka, int* degenerate) {
  return guard([&] {
    need(cka, "cka");
    const SimilarityScore s =
        layer_score(view(x, rows, x_cols), view(y, rows, y_cols), kernel_of(kernel, bandwidth));
    *cka = s.cka;
    if (degenerate) *degenerate = s.degenerate ? 1 : 0;
  });
}

ckap_status ckap_score_candidates(const ckap_net* net, const double* x, size_t rows, size_t cols,
                                  ckap_kernel kernel, ckap_stage_cap cap, size_t threads,
                                  ckap_candidate_score* scores, size_t capacity, size_t* count) {
  ckap_status st = guard([&] {
    need(net, "net");
    need(count, "count");
    const ScoringResult r = score_candidates(net->net, view(x, rows, cols), kernel_of(kernel, 0.0),
                                             cap_of(cap), resolve_threads(threads));
    *count = r.scores.size();
    if (r.scores.size() > capacity) return;
    if (!r.scores.empty()) need(scores, "scores");
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      const auto& s = r.scores[i];
      scores[i] = {{static_cast<uint32_t>(s.id.stage), static_cast<uint32_t>(s.id.position)},
                   s.similarity.cka, s.similarity.score, s.similarity.degenerate ? 1 : 0};
    }
  });
  if (st == CKAP_OK && count && *count > capacity) {
    g_last_error = "score buffer holds " + std::to_string(capacity) + ", need " +
                   std::to_string(*count);
    return CKAP_ERR_BUFFER_TOO_SMALL;
  }
  return st;
}

ckap_status ckap_experiment_open(const char* config_path, ckap_experiment** out) {
  return guard([&] {
    need(config_path, "config_path");
    need(out, "out");
    load_experiment_config(config_path);  // fail early on a bad config
    *out = new ckap_experiment{config_path, std::nullopt, {}};
  });
}

ckap_status ckap_experiment_set_seed(ckap_experiment* exp, uint64_t seed) {
  return guard([&] {
    need(exp, "experiment");
    exp->seed = seed;
  });
}

ckap_status ckap_experiment_set_output_dir(ckap_experiment* exp, const char* dir) {
  return guard([&] {
    need(exp, "experiment");
    need(dir, "dir");
    exp->options.output_dir = dir;
  });
}

ckap_status ckap_experiment_add_checkpoint(ckap_experiment* exp, const char* path) {
  return guard([&] {
    need(exp, "experiment");
    need(path, "path");
    exp->options.checkpoints.emplace_back(path);
  });
}

ckap_status ckap_experiment_run(ckap_experiment* exp, const char* command) {
  return guard([&] {
    need(exp, "experiment");
    need(command, "command");
    const ExperimentConfig cfg = load_experiment_config(exp->config_path, exp->seed);
    run_command(command, cfg, exp->options);
  });
}

void ckap_experiment_free(ckap_experiment* exp) { delete exp; }

}  // extern "C"
