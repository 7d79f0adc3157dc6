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

#include <cmath>
#include <map>

#include "ckaprune/error.hpp"
#include "ckaprune/network.hpp"
#include "ckaprune/rng.hpp"
#include "doctest.h"

using namespace ckaprune;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Hand count per sample: affine 2*in*out + out, one FLOP per ReLU or add element.
std::uint64_t oracle_flops(const ResidualNet& net) {
  const auto& s = net.spec;
  std::uint64_t f = 2 * s.input_dim * s.stage_widths[0] + s.stage_widths[0] + s.stage_widths[0];
  for (std::size_t st = 0; st < s.stage_widths.size(); ++st) {
    const std::uint64_t w = s.stage_widths[st];
    if (st > 0) {
      const std::uint64_t p = s.stage_widths[st - 1];
      f += 2 * p * w + w + w;
    }
    for (const Block& b : net.stages[st].blocks) {
      const std::uint64_t h = b.hidden();
      f += (2 * w * h + h) + h + (2 * h * w + w) + w;
    }
  }
  const std::uint64_t last = s.stage_widths.back();
  f += last + 2 * last * s.num_classes + s.num_classes;
  return f;
}

std::uint64_t oracle_params(const ResidualNet& net) {
  const auto& s = net.spec;
  std::uint64_t p = s.input_dim * s.stage_widths[0] + s.stage_widths[0];
  for (std::size_t st = 0; st < s.stage_widths.size(); ++st) {
    const std::uint64_t w = s.stage_widths[st];
    if (st > 0) p += s.stage_widths[st - 1] * w + w;
    for (const Block& b : net.stages[st].blocks) p += 2 * w * b.hidden() + b.hidden() + w;
  }
  p += s.stage_widths.back() * s.num_classes + s.num_classes;
  return p;
}

const ArchSpec k3x6{8, {8, 12, 6}, {6, 6, 6}, 3, 17};

}  // namespace

TEST_CASE("build is deterministic per seed") {
  CHECK(build(k3x6) == build(k3x6));
  ArchSpec other = k3x6;
  other.seed = 18;
  CHECK_FALSE(build(k3x6) == build(other));
}

TEST_CASE("a 3x6 net has 18 blocks and 12 candidates") {
  const ResidualNet net = build(k3x6);
  CHECK(net.block_count() == 18);
  const auto c = candidate_blocks(net);
  CHECK(c.size() == 12);
  CHECK(std::is_sorted(c.begin(), c.end()));
  for (const BlockId& id : c) {
    CHECK(id.position != 0);
    CHECK(id.position != 5);
  }
  CHECK(candidate_blocks(net, StageCap::KMinus1).size() == 15);
}

TEST_CASE("arch validation") {
  ArchSpec bad = k3x6;
  bad.blocks_per_stage = {6, 6};
  CHECK_THROWS_AS(build(bad), Error);
  bad = k3x6;
  bad.blocks_per_stage = {6, 1, 6};
  CHECK_THROWS_AS(build(bad), Error);
  bad = k3x6;
  bad.num_classes = 1;
  CHECK_THROWS_AS(build(bad), Error);
  bad = k3x6;
  bad.stage_widths = {};
  bad.blocks_per_stage = {};
  CHECK_THROWS_AS(build(bad), Error);
}

TEST_CASE("flop and parameter accounting") {
  CHECK(block_flops(8, 8) == 288);
  CHECK(block_params(8, 8) == 2 * 64 + 2 * 8);
  CHECK(affine_flops(3, 4) == 28);
  const ResidualNet net = build(k3x6);
  const FlopCount c = count_flops(net);
  CHECK(c.per_sample_flops == oracle_flops(net));
  CHECK(c.params == oracle_params(net));
  CHECK(c.params == parameter_count(net));
}

TEST_CASE("forward shapes and recomposition") {
  const ResidualNet net = build(k3x6);
  const Matrix x = random_matrix(5, 8, 1);
  const Matrix r = representation(net, x);
  CHECK(r.rows() == 5);
  CHECK(r.cols() == 6);
  for (double v : r.data()) CHECK(v >= 0.0);
  CHECK(max_abs_diff(forward(net, x), classify(net, r)) < 1e-12);
  CHECK_THROWS_AS(forward(net, random_matrix(5, 7, 1)), Error);
}

TEST_CASE("classifier weights do not touch the representation") {
  ResidualNet net = build(k3x6);
  const Matrix x = random_matrix(4, 8, 2);
  const Matrix before = representation(net, x);
  for (double& w : net.classifier.weight.data()) w += 1.0;
  CHECK(representation(net, x) == before);
}

TEST_CASE("single-sample and batched forward agree") {
  const ResidualNet net = build(k3x6);
  const Matrix x = random_matrix(9, 8, 3);
  const Matrix batch = forward(net, x);
  for (std::size_t i = 0; i < 9; ++i) {
    Matrix one(1, 8);
    std::copy(x.row(i).begin(), x.row(i).end(), one.row(0).begin());
    const Matrix o = forward(net, one);
    for (std::size_t j = 0; j < o.cols(); ++j) CHECK(std::abs(o(0, j) - batch(i, j)) < 1e-12);
  }
}

TEST_CASE("a zeroed branch acts as identity") {
  const ResidualNet net = build(k3x6);
  const Matrix x = random_matrix(6, 8, 4);
  const BlockId id{1, 3};
  const ResidualNet zeroed = zero_branch(net, id);
  const ResidualNet removed = remove_block(net, id);
  CHECK(max_abs_diff(forward(removed, x), forward(zeroed, x)) < 1e-12);
  // Removing an exactly-zero block leaves logits bit-identical.
  CHECK(forward(remove_block(zeroed, id), x) == forward(zeroed, x));
}

TEST_CASE("remove_block copies surviving weights and leaves the source alone") {
  const ResidualNet net = build(k3x6);
  const ResidualNet copy = net;
  const ResidualNet out = remove_block(net, {2, 2});
  CHECK(net == copy);
  CHECK(out.block_count() == 17);
  CHECK_FALSE(out.contains({2, 2}));
  CHECK(out.block({2, 3}) == net.block({2, 3}));
  CHECK(out.stem == net.stem);
  CHECK(out.removal_log == std::vector<BlockId>{{2, 2}});
  const std::uint64_t w = 6;
  CHECK(count_flops(net).params - count_flops(out).params == 2 * w * w + 2 * w);
  CHECK(count_flops(net).per_sample_flops - count_flops(out).per_sample_flops == block_flops(6, 6));
}

TEST_CASE("remove_block errors name the constraint") {
  const ResidualNet net = build(k3x6);
  try {
    remove_block(net, {0, 0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage cap") != std::string::npos);
  }
  CHECK_THROWS_AS(remove_block(net, {0, 5}), Error);
  CHECK_NOTHROW(remove_block(net, {0, 5}, StageCap::KMinus1));
  CHECK_THROWS_AS(remove_block(net, {3, 1}), Error);
  const ResidualNet once = remove_block(net, {0, 2});
  try {
    remove_block(once, {0, 2});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("not present") != std::string::npos);
  }
}

TEST_CASE("a stage at its cap offers no candidates") {
  ResidualNet net = build({4, {4, 4}, {4, 5}, 2, 1});
  net = remove_block(net, {0, 1});
  net = remove_block(net, {0, 2});
  for (const BlockId& id : candidate_blocks(net)) CHECK(id.stage == 1);
  CHECK(candidate_blocks(net).size() == 3);
  // Under k-1 the last block of stage 0 is still removable.
  CHECK(candidate_blocks(net, StageCap::KMinus1).size() == 5);
}

TEST_CASE("random removal sequences keep accounting exact and respect the cap") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t stages = 1 + rng.below(3);
    ArchSpec spec;
    spec.input_dim = 2 + rng.below(5);
    spec.num_classes = 2 + rng.below(3);
    spec.seed = rng.next();
    for (std::size_t s = 0; s < stages; ++s) {
      spec.stage_widths.push_back(2 + rng.below(7));
      spec.blocks_per_stage.push_back(2 + rng.below(6));
    }
    const StageCap cap = rng.below(2) == 0 ? StageCap::KMinus2 : StageCap::KMinus1;
    ResidualNet net = build(spec);
    const std::size_t limit = cap == StageCap::KMinus2 ? 2 : 1;
    while (true) {
      const auto cands = candidate_blocks(net, cap);
      std::size_t expected = 0;
      for (std::size_t s = 0; s < stages; ++s) {
        std::size_t present = 0;
        for (const Block& b : net.stages[s].blocks) {
          const bool kept = b.position == 0 || (limit == 2 && b.position == spec.blocks_per_stage[s] - 1);
          if (!kept) ++present;
        }
        expected += present;
      }
      CHECK(cands.size() == expected);
      for (std::size_t s = 0; s < stages; ++s)
        CHECK(net.stages[s].blocks.size() >= spec.blocks_per_stage[s] - (spec.blocks_per_stage[s] - limit));
      const FlopCount c = count_flops(net);
      CHECK(c.per_sample_flops == oracle_flops(net));
      CHECK(c.params == oracle_params(net));
      CHECK(c.per_sample_flops > 0);
      if (cands.empty()) break;
      const FlopCount before = c;
      const BlockId id = cands[rng.below(cands.size())];
      net = remove_block(net, id, cap);
      const std::uint64_t w = spec.stage_widths[id.stage];
      CHECK(before.params - count_flops(net).params == 2 * w * w + 2 * w);
    }
    for (std::size_t s = 0; s < stages; ++s)
      CHECK(net.stages[s].blocks.size() == limit);
  }
}

TEST_CASE("parameter spans cover every parameter once") {
  ResidualNet net = build(k3x6);
  std::size_t n = 0;
  for (auto span : parameter_spans(net)) n += span.size();
  CHECK(n == count_flops(net).params);
  const ResidualNet z = zeros_like(net);
  for (auto span : parameter_spans(z))
    for (double v : span) CHECK(v == 0.0);
}

TEST_CASE("stage cap parsing") {
  CHECK(stage_cap_from_string("k-2") == StageCap::KMinus2);
  CHECK(stage_cap_from_string("k-1") == StageCap::KMinus1);
  CHECK(std::string(to_string(StageCap::KMinus1)) == "k-1");
  CHECK_THROWS_AS(stage_cap_from_string("k-3"), Error);
}

TEST_CASE("initial weight ranges") {
  const ResidualNet net = build({10, {16}, {4}, 3, 5});
  const double stem_bound = std::sqrt(6.0 / 10.0);
  for (double w : net.stem.weight.data()) CHECK(std::abs(w) <= stem_bound);
  const double project_bound = std::sqrt(3.0 / (16.0 * 4.0));
  for (const Block& b : net.stages[0].blocks)
    for (double w : b.project.weight.data()) CHECK(std::abs(w) <= project_bound);
  for (double b : net.stem.bias) CHECK(b == 0.0);
}
