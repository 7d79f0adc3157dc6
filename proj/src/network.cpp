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

#include "ckaprune/network.hpp"

#include <algorithm>
#include <cmath>

#include "ckaprune/error.hpp"
#include "ckaprune/rng.hpp"

namespace ckaprune {

const char* to_string(StageCap cap) {
  return cap == StageCap::KMinus2 ? "k-2" : "k-1";
}

StageCap stage_cap_from_string(const std::string& s) {
  if (s == "k-2") return StageCap::KMinus2;
  if (s == "k-1") return StageCap::KMinus1;
  fail(ErrorKind::InvalidArgument, "stage_cap must be \"k-2\" or \"k-1\", got \"" + s + "\"");
}

std::string to_string(const BlockId& id) {
  return "(" + std::to_string(id.stage) + "," + std::to_string(id.position) + ")";
}

void ArchSpec::validate() const {
  require(input_dim >= 1, ErrorKind::InvalidArgument, "arch.input_dim must be >= 1");
  require(!stage_widths.empty(), ErrorKind::InvalidArgument,
          "arch.stage_widths must list at least one stage");
  require(stage_widths.size() == blocks_per_stage.size(), ErrorKind::InvalidArgument,
          "arch.stage_widths and arch.blocks_per_stage differ in length");
  for (std::size_t w : stage_widths)
    require(w >= 1, ErrorKind::InvalidArgument, "arch.stage_widths entries must be >= 1");
  for (std::size_t k : blocks_per_stage)
    require(k >= 2, ErrorKind::InvalidArgument, "arch.blocks_per_stage entries must be >= 2");
  require(num_classes >= 2, ErrorKind::InvalidArgument, "arch.num_classes must be >= 2");
}

const Block& ResidualNet::block(const BlockId& id) const {
  require(id.stage < stages.size(), ErrorKind::InvalidArgument,
          "block " + to_string(id) + ": no such stage");
  for (const Block& b : stages[id.stage].blocks)
    if (b.position == id.position) return b;
  fail(ErrorKind::InvalidArgument, "block " + to_string(id) + " is not present");
}

Block& ResidualNet::block(const BlockId& id) {
  return const_cast<Block&>(std::as_const(*this).block(id));
}

bool ResidualNet::contains(const BlockId& id) const {
  if (id.stage >= stages.size()) return false;
  const auto& blocks = stages[id.stage].blocks;
  return std::any_of(blocks.begin(), blocks.end(),
                     [&](const Block& b) { return b.position == id.position; });
}

std::size_t ResidualNet::block_count() const {
  std::size_t n = 0;
  for (const Stage& s : stages) n += s.blocks.size();
  return n;
}

std::uint64_t affine_flops(std::size_t in, std::size_t out) {
  return 2ULL * in * out + out;
}

std::uint64_t affine_params(std::size_t in, std::size_t out) {
  return static_cast<std::uint64_t>(in) * out + out;
}

std::uint64_t block_flops(std::size_t width, std::size_t hidden) {
  return affine_flops(width, hidden) + hidden + affine_flops(hidden, width) + width;
}

std::uint64_t block_params(std::size_t width, std::size_t hidden) {
  return affine_params(width, hidden) + affine_params(hidden, width);
}

namespace {

Affine init_affine(Rng& rng, std::size_t in, std::size_t out, double bound) {
  Affine a;
  a.weight = Matrix(out, in);
  for (double& w : a.weight.data()) w = rng.uniform(-bound, bound);
  a.bias.assign(out, 0.0);
  return a;
}

double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

}  // namespace

ResidualNet build(const ArchSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ResidualNet net;
  net.spec = spec;
  net.stem = init_affine(rng, spec.input_dim, spec.stage_widths[0], he_bound(spec.input_dim));
  for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
    const std::size_t w = spec.stage_widths[s];
    const std::size_t k = spec.blocks_per_stage[s];
    // Residual projections shrink with stage depth so the stream variance
    // grows by roughly e per stage instead of geometrically per block.
    const double project_bound = std::sqrt(3.0 / (static_cast<double>(w) * k));
    Stage stage;
    stage.width = w;
    for (std::size_t p = 0; p < k; ++p) {
      Block b;
      b.position = p;
      b.expand = init_affine(rng, w, w, he_bound(w));
      b.project = init_affine(rng, w, w, project_bound);
      stage.blocks.push_back(std::move(b));
    }
    net.stages.push_back(std::move(stage));
  }
  for (std::size_t s = 1; s < spec.stage_widths.size(); ++s) {
    const std::size_t in = spec.stage_widths[s - 1];
    net.transitions.push_back(init_affine(rng, in, spec.stage_widths[s], he_bound(in)));
  }
  const std::size_t last = spec.stage_widths.back();
  net.classifier = init_affine(rng, last, spec.num_classes,
                               std::sqrt(3.0 / static_cast<double>(last)));
  return net;
}

Matrix apply_affine(const Affine& layer, const Matrix& x) {
  require(x.cols() == layer.in(), ErrorKind::DimensionMismatch,
          "affine expects " + std::to_string(layer.in()) + " inputs, got " + x.shape());
  const Matrix wt = transpose(layer.weight);
  const std::size_t out_dim = layer.out();
  const std::size_t in_dim = layer.in();
  const std::size_t rows = x.rows();
  Matrix out(rows, out_dim);
  for (std::size_t i = 0; i < rows; ++i) std::copy(layer.bias.begin(), layer.bias.end(), out.row(i).begin());
  // Four samples per pass so each weight row is loaded once per tile.
  constexpr std::size_t kTile = 4;
  std::size_t i = 0;
  for (; i + kTile <= rows; i += kTile) {
    double* o0 = out.row(i).data();
    double* o1 = out.row(i + 1).data();
    double* o2 = out.row(i + 2).data();
    double* o3 = out.row(i + 3).data();
    const double* x0 = x.row(i).data();
    const double* x1 = x.row(i + 1).data();
    const double* x2 = x.row(i + 2).data();
    const double* x3 = x.row(i + 3).data();
    for (std::size_t k = 0; k < in_dim; ++k) {
      const double* w = wt.row(k).data();
      const double v0 = x0[k], v1 = x1[k], v2 = x2[k], v3 = x3[k];
      for (std::size_t j = 0; j < out_dim; ++j) {
        const double wj = w[j];
        o0[j] += v0 * wj;
        o1[j] += v1 * wj;
        o2[j] += v2 * wj;
        o3[j] += v3 * wj;
      }
    }
  }
  for (; i < rows; ++i) {
    double* o = out.row(i).data();
    const double* xi = x.row(i).data();
    for (std::size_t k = 0; k < in_dim; ++k) {
      const double* w = wt.row(k).data();
      const double v = xi[k];
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += v * w[j];
    }
  }
  return out;
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

namespace {

void add_branch(Matrix& h, const Block& b) {
  Matrix hidden = apply_affine(b.expand, h);
  relu_inplace(hidden);
  const Matrix branch = apply_affine(b.project, hidden);
  auto hd = h.data();
  auto bd = branch.data();
  for (std::size_t i = 0; i < hd.size(); ++i) hd[i] += bd[i];
}

}  // namespace

Matrix representation(const ResidualNet& net, const Matrix& x) {
  require(x.cols() == net.spec.input_dim, ErrorKind::DimensionMismatch,
          "network expects " + std::to_string(net.spec.input_dim) + " features, got " +
              x.shape());
  Matrix h = apply_affine(net.stem, x);
  relu_inplace(h);
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    if (s > 0) {
      h = apply_affine(net.transitions[s - 1], h);
      relu_inplace(h);
    }
    for (const Block& b : net.stages[s].blocks) add_branch(h, b);
  }
  relu_inplace(h);
  return h;
}

Matrix classify(const ResidualNet& net, const Matrix& rep) {
  return apply_affine(net.classifier, rep);
}

Matrix forward(const ResidualNet& net, const Matrix& x) {
  return classify(net, representation(net, x));
}

namespace {

std::size_t protected_tail(StageCap cap) { return cap == StageCap::KMinus2 ? 1 : 0; }

bool is_candidate(const ResidualNet& net, const BlockId& id, StageCap cap) {
  const std::size_t k = net.spec.blocks_per_stage[id.stage];
  if (id.position == 0) return false;
  if (protected_tail(cap) == 1 && id.position == k - 1) return false;
  return true;
}

}  // namespace

std::vector<BlockId> candidate_blocks(const ResidualNet& net, StageCap cap) {
  std::vector<BlockId> out;
  for (std::size_t s = 0; s < net.stages.size(); ++s)
    for (const Block& b : net.stages[s].blocks) {
      const BlockId id{s, b.position};
      if (is_candidate(net, id, cap)) out.push_back(id);
    }
  return out;
}

ResidualNet remove_block(const ResidualNet& net, const BlockId& id, StageCap cap) {
  require(net.contains(id), ErrorKind::InvalidArgument,
          "cannot remove block " + to_string(id) + ": not present in the network");
  if (!is_candidate(net, id, cap)) {
    fail(ErrorKind::InvalidArgument,
         "cannot remove block " + to_string(id) + ": stage-boundary block protected by the " +
             std::string(to_string(cap)) + " stage cap");
  }
  ResidualNet out;
  out.spec = net.spec;
  out.stem = net.stem;
  out.transitions = net.transitions;
  out.classifier = net.classifier;
  out.stages.reserve(net.stages.size());
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    Stage stage;
    stage.width = net.stages[s].width;
    for (const Block& b : net.stages[s].blocks)
      if (!(s == id.stage && b.position == id.position)) stage.blocks.push_back(b);
    out.stages.push_back(std::move(stage));
  }
  out.removal_log = net.removal_log;
  out.removal_log.push_back(id);
  return out;
}

ResidualNet zero_branch(const ResidualNet& net, const BlockId& id) {
  ResidualNet out = net;
  Block& b = out.block(id);
  for (Affine* a : {&b.expand, &b.project}) {
    std::fill(a->weight.data().begin(), a->weight.data().end(), 0.0);
    std::fill(a->bias.begin(), a->bias.end(), 0.0);
  }
  return out;
}

FlopCount count_flops(const ResidualNet& net) {
  FlopCount c;
  const std::size_t w0 = net.stem.out();
  c.per_sample_flops += affine_flops(net.stem.in(), w0) + w0;
  c.params += affine_params(net.stem.in(), w0);
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const std::size_t w = net.stages[s].width;
    if (s > 0) {
      const Affine& t = net.transitions[s - 1];
      c.per_sample_flops += affine_flops(t.in(), t.out()) + t.out();
      c.params += affine_params(t.in(), t.out());
    }
    for (const Block& b : net.stages[s].blocks) {
      c.per_sample_flops += block_flops(w, b.hidden());
      c.params += block_params(w, b.hidden());
    }
  }
  const std::size_t last = net.classifier.in();
  c.per_sample_flops += last + affine_flops(last, net.classifier.out());
  c.params += affine_params(last, net.classifier.out());
  return c;
}

std::size_t hidden_units(const ResidualNet& net) {
  std::size_t n = 0;
  for (const Stage& s : net.stages)
    for (const Block& b : s.blocks) n += b.hidden();
  return n;
}

namespace {

template <typename Net, typename Span>
std::vector<Span> collect_spans(Net& net) {
  std::vector<Span> out;
  auto push = [&](auto& affine) {
    out.emplace_back(affine.weight.data());
    out.emplace_back(affine.bias);
  };
  push(net.stem);
  for (auto& stage : net.stages)
    for (auto& b : stage.blocks) {
      push(b.expand);
      push(b.project);
    }
  for (auto& t : net.transitions) push(t);
  push(net.classifier);
  return out;
}

}  // namespace

std::vector<std::span<double>> parameter_spans(ResidualNet& net) {
  return collect_spans<ResidualNet, std::span<double>>(net);
}

std::vector<std::span<const double>> parameter_spans(const ResidualNet& net) {
  return collect_spans<const ResidualNet, std::span<const double>>(net);
}

ResidualNet zeros_like(const ResidualNet& net) {
  ResidualNet out = net;
  for (auto span : parameter_spans(out)) std::fill(span.begin(), span.end(), 0.0);
  return out;
}

std::size_t parameter_count(const ResidualNet& net) {
  std::size_t n = 0;
  for (auto span : parameter_spans(net)) n += span.size();
  return n;
}

}  // namespace ckaprune
