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

// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is nonzero if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ckaprune/checkpoint.hpp"
#include "ckaprune/evaluation.hpp"
#include "ckaprune/experiment.hpp"
#include "ckaprune/network.hpp"
#include "ckaprune/pruner.hpp"
#include "ckaprune/rng.hpp"
#include "ckaprune/similarity.hpp"
#include "ckaprune/training.hpp"

using namespace ckaprune;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix normal_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// ---- 1 -------------------------------------------------------------------

using Dense = std::vector<std::vector<double>>;

Dense dense_mul(const Dense& a, const Dense& b) {
  Dense c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Builds K = X X^T and H = I - 11^T/n explicitly and multiplies them out.
double brute_cka(const Matrix& x, const Matrix& y) {
  const std::size_t n = x.rows();
  auto gram_of = [n](const Matrix& m) {
    Dense k(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < m.cols(); ++c) k[i][j] += m(i, c) * m(j, c);
    return k;
  };
  Dense h(n, std::vector<double>(n, -1.0 / static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) h[i][i] += 1.0;
  auto hsic = [&](const Dense& k, const Dense& l) {
    const Dense p = dense_mul(dense_mul(dense_mul(k, h), l), h);
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += p[i][i];
    return tr / static_cast<double>((n - 1) * (n - 1));
  };
  const Dense k = gram_of(x), l = gram_of(y);
  return hsic(k, l) / std::sqrt(hsic(k, k) * hsic(l, l));
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int pair = 0; pair < 200; ++pair) {
    const std::size_t n = 4 + rng.below(13);
    const Matrix x = normal_matrix(n, 1 + rng.below(8), rng);
    const Matrix y = normal_matrix(n, 1 + rng.below(8), rng);
    const double g = cka(x, y, KernelKind::linear()).cka;
    const double f = cka_linear_feature(x, y).cka;
    const double b = brute_cka(x, y);
    const double scale = std::max({std::abs(g), std::abs(f), std::abs(b), 1e-300});
    worst = std::max({worst, std::abs(g - b) / scale, std::abs(f - b) / scale,
                      std::abs(g - f) / scale});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 2.0,
          fmt("200 pairs, worst relative gap %.2e, %.3f s", worst, secs)};
}

// ---- 2 -------------------------------------------------------------------

Matrix random_orthogonal(std::size_t d, Rng& rng) {
  Matrix q = normal_matrix(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += q(k, i) * q(k, j);
      for (std::size_t k = 0; k < d; ++k) q(k, i) -= dot * q(k, j);
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += q(k, i) * q(k, i);
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < d; ++k) q(k, i) /= norm;
  }
  return q;
}

Outcome criterion2() {
  Rng rng(202);
  double orth = 0.0, scale = 0.0, sym = 0.0, self = 0.0;
  bool in_range = true;
  for (const KernelKind& kernel : {KernelKind::linear(), KernelKind::rbf()}) {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 5 + rng.below(20), d = 1 + rng.below(10);
      const Matrix x = normal_matrix(n, d, rng);
      const Matrix y = normal_matrix(n, 1 + rng.below(10), rng);
      const double base = cka(x, y, kernel).cka;
      const double rotated = cka(matmul(x, random_orthogonal(d, rng)), y, kernel).cka;
      Matrix scaled = x;
      const double c = std::exp(rng.uniform(-3.0, 3.0));
      for (double& v : scaled.data()) v *= c;
      orth = std::max(orth, std::abs(rotated - base));
      scale = std::max(scale, std::abs(cka(scaled, y, kernel).cka - base));
      sym = std::max(sym, std::abs(cka(y, x, kernel).cka - base));
      self = std::max(self, std::abs(cka(x, x, kernel).cka - 1.0));
      in_range = in_range && base >= 0.0 && base <= 1.0;
    }
  }
  const bool pass = orth <= 1e-8 && scale <= 1e-8 && sym <= 1e-12 && self <= 1e-12 && in_range;
  return {pass, fmt("linear+rbf, orthogonal %.1e, scale %.1e, symmetry %.1e, self %.1e, range %s",
                    orth, scale, sym, self, in_range ? "ok" : "violated")};
}

// ---- 3 -------------------------------------------------------------------

Outcome criterion3() {
  Rng rng(303);
  int ok = 0;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    ArchSpec spec;
    spec.input_dim = 2 + rng.below(8);
    const std::size_t stages = 1 + rng.below(3);
    for (std::size_t s = 0; s < stages; ++s) {
      spec.stage_widths.push_back(4 + rng.below(12));
      spec.blocks_per_stage.push_back(3 + rng.below(4));
    }
    spec.num_classes = 2 + rng.below(4);
    spec.seed = rng.next();
    const ResidualNet net = build(spec);
    const auto candidates = candidate_blocks(net);
    const BlockId target = candidates[rng.below(candidates.size())];
    const ResidualNet zeroed = zero_branch(net, target);
    const Matrix x = normal_matrix(48, spec.input_dim, rng);

    const auto first = score_candidates(zeroed, x);
    const auto again = score_candidates(zeroed, x);
    double target_score = 1.0;
    bool same = first.scores.size() == again.scores.size();
    for (std::size_t i = 0; i < first.scores.size(); ++i) {
      if (first.scores[i].id == target) target_score = first.scores[i].similarity.score;
      same = same && first.scores[i].similarity.score == again.scores[i].similarity.score;
    }
    worst = std::max(worst, target_score);
    const PruneStep step = prune_one(zeroed, x);
    if (target_score < 1e-12 && step.record.removed == target && same) ++ok;
  }
  return {ok == 20, fmt("%d/20 nets remove the identity block, worst score %.1e", ok, worst)};
}

// ---- 4 -------------------------------------------------------------------

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  ResidualNet net = build({5, {6, 4}, {3, 3}, 3, 404});
  Rng rng(404);
  // Zero biases from build can put pre-activations on the ReLU kink.
  for (auto span : parameter_spans(net))
    for (double& v : span) v += 0.1 * rng.normal();
  Matrix x = normal_matrix(8, 5, rng);
  std::vector<int> y(8);
  for (int& v : y) v = static_cast<int>(rng.below(3));

  const Gradients g = backprop(net, x, y);
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + h;
    const double up = cross_entropy(forward(net, x), y);
    slot = saved - h;
    const double down = cross_entropy(forward(net, x), y);
    slot = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-3});
    worst = std::max(worst, std::abs(fd - analytic) / scale);
  };
  auto params = parameter_spans(net);
  const auto grads = parameter_spans(std::as_const(g.params));
  std::size_t checked = 0;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t].size(); ++i, ++checked) check(params[t][i], grads[t][i]);
  for (std::size_t i = 0; i < x.size(); ++i) check(x.data()[i], g.input.data()[i]);
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && checked == parameter_count(net) && secs < 10.0,
          fmt("%zu parameters + %zu inputs, worst relative error %.1e, %.2f s", checked, x.size(),
              worst, secs)};
}

// ---- 5 -------------------------------------------------------------------

struct Analytic {
  std::uint64_t flops = 0, params = 0;
};

// Closed form for nets whose blocks all keep hidden width equal to the stage width.
Analytic analytic_counts(const ArchSpec& s, const std::vector<std::size_t>& blocks_left) {
  Analytic a;
  const std::uint64_t w0 = s.stage_widths[0];
  a.flops = 2 * s.input_dim * w0 + w0 + w0;
  a.params = s.input_dim * w0 + w0;
  for (std::size_t st = 0; st < s.stage_widths.size(); ++st) {
    const std::uint64_t w = s.stage_widths[st];
    if (st > 0) {
      const std::uint64_t p = s.stage_widths[st - 1];
      a.flops += 2 * p * w + 2 * w;
      a.params += p * w + w;
    }
    a.flops += blocks_left[st] * (4 * w * w + 4 * w);
    a.params += blocks_left[st] * (2 * w * w + 2 * w);
  }
  const std::uint64_t last = s.stage_widths.back();
  a.flops += last + 2 * last * s.num_classes + s.num_classes;
  a.params += last * s.num_classes + s.num_classes;
  return a;
}

Outcome criterion5() {
  Rng rng(505);
  int sequences_ok = 0;
  std::size_t removals = 0;
  for (int seq = 0; seq < 100; ++seq) {
    ArchSpec spec;
    spec.input_dim = 1 + rng.below(10);
    const std::size_t stages = 1 + rng.below(4);
    for (std::size_t s = 0; s < stages; ++s) {
      spec.stage_widths.push_back(1 + rng.below(16));
      spec.blocks_per_stage.push_back(2 + rng.below(6));
    }
    spec.num_classes = 2 + rng.below(5);
    spec.seed = rng.next();
    const StageCap cap = rng.below(2) == 0 ? StageCap::KMinus2 : StageCap::KMinus1;
    ResidualNet net = build(spec);
    std::vector<std::size_t> left = spec.blocks_per_stage;
    bool ok = true;
    while (true) {
      const Analytic a = analytic_counts(spec, left);
      const FlopCount c = count_flops(net);
      ok = ok && c.per_sample_flops == a.flops && c.params == a.params &&
           c.params == parameter_count(net);
      for (std::size_t s = 0; s < stages; ++s) {
        // Protected original positions: the first, plus the last under k-2.
        const auto& blocks = net.stages[s].blocks;
        ok = ok && !blocks.empty() && blocks.front().position == 0;
        if (cap == StageCap::KMinus2)
          ok = ok && blocks.size() >= 2 && blocks.back().position == spec.blocks_per_stage[s] - 1;
      }
      const auto candidates = candidate_blocks(net, cap);
      if (candidates.empty()) break;
      const BlockId pick = candidates[rng.below(candidates.size())];
      net = remove_block(net, pick, cap);
      --left[pick.stage];
      ++removals;
    }
    if (ok) ++sequences_ok;
  }
  return {sequences_ok == 100,
          fmt("%d/100 sequences exact, %zu removals checked", sequences_ok, removals)};
}

// ---- 6 -------------------------------------------------------------------

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = 16;
  double sum_base = 0.0, sum_cka = 0.0, sum_random = 0.0, worst_drop = -1e9, min_base = 1.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DataSplit data = synth_dataset(5000, dim, 10, 0.25, derive_seed(seed, 2));
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 64;
    tc.learning_rate = 0.01;
    tc.momentum = 0.9;
    tc.seed = derive_seed(seed, 3);
    const ResidualNet base =
        train(build({dim, {32, 32, 32}, {6, 6, 6}, 10, derive_seed(seed, 1)}), data.train, tc).net;

    PruneConfig pc;
    pc.iterations = 8;
    pc.score_sample_count = 512;
    pc.seed = derive_seed(seed, 4);
    pc.finetune = tc;
    pc.finetune.epochs = 10;
    pc.finetune.learning_rate = 0.1 * tc.learning_rate;
    pc.finetune.seed = derive_seed(seed, 5);
    const PruneResult pruned = prune_iterative(base, data, pc);

    // Same budget: eight removals, each followed by the same fine-tuning.
    ResidualNet rnd = base;
    for (std::size_t it = 1; it <= pc.iterations; ++it) {
      rnd = random_layer_prune(rnd, derive_seed(seed, 0x100 + it)).first;
      TrainConfig ft = pc.finetune;
      ft.seed = derive_seed(pc.finetune.seed, it);
      rnd = finetune(rnd, data.train, ft);
    }
    const double acc_base = pruned.trace.initial_accuracy;
    const double acc_cka = pruned.trace.final_accuracy;
    const double acc_rnd = evaluate(rnd, data.test);
    sum_base += acc_base;
    sum_cka += acc_cka;
    sum_random += acc_rnd;
    min_base = std::min(min_base, acc_base);
    worst_drop = std::max(worst_drop, 100.0 * (acc_base - acc_cka));
    per_seed += fmt(" [%.3f %.3f %.3f]", acc_base, acc_cka, acc_rnd);
  }
  const double secs = seconds_since(t0);
  const bool calibrated = min_base >= 0.90;
  const bool drop_ok = worst_drop <= 2.0;
  const bool beats_random = sum_cka >= sum_random;
  return {calibrated && drop_ok && beats_random && secs <= 600.0,
          fmt("base min %.3f, worst drop %.2f pp, mean cka %.4f vs random %.4f, %.0f s;"
              " per seed [base cka random]%s",
              min_base, worst_drop, sum_cka / 5, sum_random / 5, secs, per_seed.c_str())};
}

// ---- 7 -------------------------------------------------------------------

Outcome criterion7() {
  const std::size_t dim = 16;
  double total = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DataSplit data = synth_dataset(2000, dim, 10, 0.25, derive_seed(seed, 2));
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 0.01;
    tc.seed = derive_seed(seed, 3);
    const ResidualNet net =
        train(build({dim, {16, 16}, {5, 5}, 10, derive_seed(seed, 1)}), data.train, tc).net;

    PruneConfig pc;
    pc.seed = derive_seed(seed, 4);
    const Matrix x = scoring_sample(data.train, pc);
    const auto scored = score_candidates(net, x);
    TrainConfig ft = tc;
    ft.epochs = 2;
    ft.learning_rate = 0.001;
    ft.seed = derive_seed(seed, 7);
    const auto oracle = oracle_rank(net, data, ft);

    std::vector<double> sim, acc;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      sim.push_back(1.0 - scored.scores[i].similarity.score);
      acc.push_back(oracle[i].accuracy);
    }
    const double rho = spearman(sim, acc);
    total += rho;
    per_seed += fmt(" %.3f", rho);
  }
  const double mean = total / 5.0;
  return {mean > 0.0, fmt("6 candidates, mean Spearman(1 - score, oracle acc) %.3f; per seed%s",
                          mean, per_seed.c_str())};
}

// ---- 8 -------------------------------------------------------------------

Outcome criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  const ResidualNet base = build({32, {64, 64, 64}, {10, 10, 10}, 10, 808});
  Rng rng(808);
  const Matrix x_score = normal_matrix(256, 32, rng);
  std::vector<PrunedVariant> layer, filter;
  ResidualNet current = base;
  std::size_t removed = 0;
  // Eight matched points, three blocks (192 hidden units) apart.
  for (int step = 0; step < 8; ++step) {
    for (int r = 0; r < 3; ++r) {
      current = prune_one(current, x_score).net;
      removed += 64;
    }
    layer.push_back({current, removed});
    filter.push_back({l1_filter_prune_units(base, removed), removed});
  }
  LatencyOptions opts;
  opts.n_samples = 2000;
  opts.runs = 30;
  opts.warmup_runs = 3;
  opts.batch_size = 32;
  opts.seed = 808;
  const LatencyComparison cmp = latency_compare(base, layer, filter, opts, 0.05);
  std::size_t wins = 0;
  std::string points;
  for (const auto& p : cmp.points) {
    wins += p.layer_speedup >= p.filter_speedup ? 1 : 0;
    points += fmt(" %zu:%.2f/%.2f", p.layer_neurons_removed, p.layer_speedup, p.filter_speedup);
  }
  const double frac = static_cast<double>(wins) / static_cast<double>(cmp.points.size());
  return {frac >= 0.8, fmt("layer >= filter at %zu/%zu matched points, %.0f s; units:layer/filter%s",
                           wins, cmp.points.size(), seconds_since(t0), points.c_str())};
}

// ---- 9 -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion9() {
  const fs::path root = fs::temp_directory_path() / "ckaprune_acceptance_determinism";
  fs::remove_all(root);
  const auto cfg = load_experiment_config(fs::path(CKAP_SOURCE_DIR) / "configs" / "toy.json");
  std::vector<std::string> traces, checkpoints, in_memory;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / ("run" + std::to_string(run));
    RunOptions opts;
    opts.output_dir = out;
    run_command("train", cfg, opts);
    run_command("prune", cfg, opts);
    traces.push_back(slurp(out / "prune_trace.json"));
    checkpoints.push_back(slurp(out / "pruned.ckpt"));

    // Library path, independent of the files above.
    const DataSplit data = load_data(cfg);
    const ResidualNet trained = load(out / "model.ckpt");
    const PruneResult r = prune_iterative(trained, data, cfg.prune);
    const auto bytes = serialize(r.net);
    in_memory.push_back(to_json(r.trace).dump(2) + std::string(bytes.begin(), bytes.end()));
  }
  fs::remove_all(root);
  const bool pass = !traces[0].empty() && !checkpoints[0].empty() && traces[0] == traces[1] &&
                    checkpoints[0] == checkpoints[1] && in_memory[0] == in_memory[1];
  return {pass, fmt("trace %zu bytes %s, checkpoint %zu bytes %s, in-memory rerun %s",
                    traces[0].size(), traces[0] == traces[1] ? "identical" : "DIFFERENT",
                    checkpoints[0].size(), checkpoints[0] == checkpoints[1] ? "identical" : "DIFFERENT",
                    in_memory[0] == in_memory[1] ? "identical" : "DIFFERENT")};
}

// ---- 10 ------------------------------------------------------------------

Outcome criterion10() {
  // 80.85% fewer fine-tuning FLOP-epochs: 1915 vs 10000 units of work.
  double worst = 0.0;
  bool rounds = true;
  const Co2Config configs[] = {{}, {5e11, 300.0, 0.2}, {3.7e13, 65.0, 0.9}};
  for (const Co2Config& cfg : configs) {
    for (std::uint64_t per_sample : {1000ULL, 123457ULL, 40000000ULL}) {
      const double unpruned = training_flops(per_sample * 10000, 5000, 10);
      const double pruned = training_flops(per_sample * 1915, 5000, 10);
      const double r = co2_reduction(co2_estimate(unpruned, cfg), co2_estimate(pruned, cfg));
      worst = std::max(worst, std::abs(r - 0.8085));
      rounds = rounds && fmt("%.2f", 100.0 * r) == "80.85";
    }
  }
  return {worst <= 1e-12 && rounds,
          fmt("9 configurations, reduction 80.85%%, worst deviation %.1e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3,
                                                       criterion4, criterion5, criterion6,
                                                       criterion7, criterion8, criterion9,
                                                       criterion10};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
