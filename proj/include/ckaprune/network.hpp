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

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckaprune/linalg.hpp"

namespace ckaprune {

/// Per-stage removal cap. Under KMinus2 the first and last block of each
/// stage stay; under KMinus1 only the stage-entry block stays.
enum class StageCap { KMinus2, KMinus1 };

const char* to_string(StageCap cap);
StageCap stage_cap_from_string(const std::string& s);

struct ArchSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> stage_widths;
  std::vector<std::size_t> blocks_per_stage;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;

  /// Throws ErrorKind::InvalidArgument naming the broken field.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Identifies a residual block by stage and by its position in the stage
/// as originally built. Positions stay stable across removals.
struct BlockId {
  std::size_t stage = 0;
  std::size_t position = 0;

  friend auto operator<=>(const BlockId&, const BlockId&) = default;
  friend bool operator==(const BlockId&, const BlockId&) = default;
};

std::string to_string(const BlockId& id);

/// y = W x + b with W stored out x in, row-major.
struct Affine {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in() const noexcept { return weight.cols(); }
  std::size_t out() const noexcept { return weight.rows(); }

  friend bool operator==(const Affine&, const Affine&) = default;
};

/// Residual block: f(y) = project(relu(expand(y))), output y + f(y).
struct Block {
  std::size_t position = 0;
  Affine expand;   // width -> hidden
  Affine project;  // hidden -> width

  std::size_t hidden() const noexcept { return expand.out(); }

  friend bool operator==(const Block&, const Block&) = default;
};

struct Stage {
  std::size_t width = 0;
  std::vector<Block> blocks;

  friend bool operator==(const Stage&, const Stage&) = default;
};

/// Residual multilayer perceptron:
///   h = relu(stem(x)); per stage: [h = relu(transition(h))], h += f_i(h)
///   for each block; representation = relu(h); logits = classifier(rep).
struct ResidualNet {
  ArchSpec spec;
  Affine stem;
  std::vector<Stage> stages;
  std::vector<Affine> transitions;  // stages.size() - 1 entries
  Affine classifier;
  std::vector<BlockId> removal_log;

  const Block& block(const BlockId& id) const;
  Block& block(const BlockId& id);
  bool contains(const BlockId& id) const;
  std::size_t block_count() const;

  friend bool operator==(const ResidualNet&, const ResidualNet&) = default;
};

struct FlopCount {
  std::uint64_t per_sample_flops = 0;
  std::uint64_t params = 0;

  friend bool operator==(const FlopCount&, const FlopCount&) = default;
};

// FLOP convention: affine in->out costs 2*in*out + out, ReLU and the
// residual add cost one FLOP per element.
std::uint64_t affine_flops(std::size_t in, std::size_t out);
std::uint64_t affine_params(std::size_t in, std::size_t out);
std::uint64_t block_flops(std::size_t width, std::size_t hidden);
std::uint64_t block_params(std::size_t width, std::size_t hidden);

ResidualNet build(const ArchSpec& spec);

/// out = x W^T + b.
Matrix apply_affine(const Affine& layer, const Matrix& x);
void relu_inplace(Matrix& m);

Matrix forward(const ResidualNet& net, const Matrix& x);

/// Penultimate activations (post-ReLU output of the last stage).
Matrix representation(const ResidualNet& net, const Matrix& x);

/// Applies the classifier head to a representation.
Matrix classify(const ResidualNet& net, const Matrix& rep);

std::vector<BlockId> candidate_blocks(const ResidualNet& net,
                                      StageCap cap = StageCap::KMinus2);

/// Returns a rebuilt net without \p id; surviving weights are copied
/// unchanged and the source is untouched.
ResidualNet remove_block(const ResidualNet& net, const BlockId& id,
                         StageCap cap = StageCap::KMinus2);

/// Copy of \p net with the residual branch of \p id set to zero.
ResidualNet zero_branch(const ResidualNet& net, const BlockId& id);

FlopCount count_flops(const ResidualNet& net);

/// Total hidden units across all residual blocks.
std::size_t hidden_units(const ResidualNet& net);

/// Parameter tensors in checkpoint order: stem (W, b), each stage's
/// blocks (W1, b1, W2, b2), transitions (W, b), classifier (W, b).
std::vector<std::span<double>> parameter_spans(ResidualNet& net);
std::vector<std::span<const double>> parameter_spans(const ResidualNet& net);

/// Same architecture as \p net with every parameter set to zero.
ResidualNet zeros_like(const ResidualNet& net);

std::size_t parameter_count(const ResidualNet& net);

}  // namespace ckaprune
