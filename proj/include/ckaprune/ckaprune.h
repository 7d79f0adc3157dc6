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

#ifndef CKAPRUNE_CKAPRUNE_H_
#define CKAPRUNE_CKAPRUNE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CKAP_API __declspec(dllexport)
#else
#define CKAP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ckap_status {
  CKAP_OK = 0,
  CKAP_ERR_INVALID_ARGUMENT = 1,
  CKAP_ERR_DIMENSION_MISMATCH = 2,
  CKAP_ERR_CONFIG = 3,
  CKAP_ERR_IO = 4,
  CKAP_ERR_BAD_MAGIC = 5,
  CKAP_ERR_BAD_VERSION = 6,
  CKAP_ERR_TRUNCATED = 7,
  CKAP_ERR_CHECKSUM = 8,
  CKAP_ERR_PARSE = 9,
  CKAP_ERR_NUMERIC = 10,
  CKAP_ERR_NOT_PRUNABLE = 11,
  CKAP_ERR_INTERNAL = 12,
  CKAP_ERR_BUFFER_TOO_SMALL = 13
} ckap_status;

typedef enum ckap_kernel { CKAP_KERNEL_LINEAR = 0, CKAP_KERNEL_RBF = 1 } ckap_kernel;

typedef enum ckap_stage_cap { CKAP_CAP_K_MINUS_2 = 0, CKAP_CAP_K_MINUS_1 = 1 } ckap_stage_cap;

typedef struct ckap_net ckap_net;
typedef struct ckap_experiment ckap_experiment;

typedef struct ckap_block_id {
  uint32_t stage;
  uint32_t position;
} ckap_block_id;

typedef struct ckap_candidate_score {
  ckap_block_id id;
  double cka;
  double score;
  int degenerate;
} ckap_candidate_score;

/* Message of the last failed call on this thread; "" after success. */
CKAP_API const char* ckap_last_error(void);
CKAP_API const char* ckap_status_string(ckap_status status);
CKAP_API const char* ckap_version(void);

/* Networks. Matrices are row-major doubles. */
CKAP_API ckap_status ckap_net_build(const char* arch_json, ckap_net** out);
CKAP_API ckap_status ckap_net_load(const char* path, ckap_net** out);
CKAP_API ckap_status ckap_net_save(const ckap_net* net, const char* path);
CKAP_API void ckap_net_free(ckap_net* net);

CKAP_API ckap_status ckap_net_input_dim(const ckap_net* net, size_t* out);
CKAP_API ckap_status ckap_net_num_classes(const ckap_net* net, size_t* out);
CKAP_API ckap_status ckap_net_representation_dim(const ckap_net* net, size_t* out);

/* logits must hold rows * num_classes values. */
CKAP_API ckap_status ckap_net_forward(const ckap_net* net, const double* x, size_t rows,
                                      size_t cols, double* logits);
/* rep must hold rows * representation_dim values. */
CKAP_API ckap_status ckap_net_representation(const ckap_net* net, const double* x, size_t rows,
                                             size_t cols, double* rep);

CKAP_API ckap_status ckap_net_count(const ckap_net* net, uint64_t* flops, uint64_t* params,
                                    size_t* blocks);

/* Writes up to capacity ids; *count receives the total. Returns
   CKAP_ERR_BUFFER_TOO_SMALL when capacity is short. */
CKAP_API ckap_status ckap_net_candidates(const ckap_net* net, ckap_stage_cap cap,
                                         ckap_block_id* ids, size_t capacity, size_t* count);

/* Replaces *net in place on success. */
CKAP_API ckap_status ckap_net_remove_block(ckap_net* net, ckap_block_id id, ckap_stage_cap cap);

/* bandwidth <= 0 selects the median heuristic for RBF. */
CKAP_API ckap_status ckap_cka(const double* x, size_t rows, size_t x_cols, const double* y,
                              size_t y_cols, ckap_kernel kernel, double bandwidth, double* cka,
                              int* degenerate);

CKAP_API ckap_status ckap_score_candidates(const ckap_net* net, const double* x, size_t rows,
                                           size_t cols, ckap_kernel kernel, ckap_stage_cap cap,
                                           size_t threads, ckap_candidate_score* scores,
                                           size_t capacity, size_t* count);

/* Experiments driven by a JSON config file. */
CKAP_API ckap_status ckap_experiment_open(const char* config_path, ckap_experiment** out);
CKAP_API ckap_status ckap_experiment_set_seed(ckap_experiment* exp, uint64_t seed);
CKAP_API ckap_status ckap_experiment_set_output_dir(ckap_experiment* exp, const char* dir);
CKAP_API ckap_status ckap_experiment_add_checkpoint(ckap_experiment* exp, const char* path);
/* command: train, prune, eval, latency or oracle. */
CKAP_API ckap_status ckap_experiment_run(ckap_experiment* exp, const char* command);
CKAP_API void ckap_experiment_free(ckap_experiment* exp);

#ifdef __cplusplus
}
#endif

#endif  // CKAPRUNE_CKAPRUNE_H_
