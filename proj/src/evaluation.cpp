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

#include "ckaprune/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

#include "ckaprune/error.hpp"
#include "ckaprune/rng.hpp"

namespace ckaprune {

LatencyStats summarize_timings(std::vector<double> timings_ms, std::size_t n_samples) {
  require(!timings_ms.empty(), ErrorKind::InvalidArgument, "no timings to summarize");
  LatencyStats s;
  s.runs = timings_ms.size();
  s.n_samples = n_samples;
  double sum = 0.0;
  for (double t : timings_ms) sum += t;
  s.mean_ms = sum / static_cast<double>(s.runs);
  if (s.runs > 1) {
    double sq = 0.0;
    for (double t : timings_ms) sq += (t - s.mean_ms) * (t - s.mean_ms);
    s.std_ms = std::sqrt(sq / static_cast<double>(s.runs - 1));
  }
  std::vector<double> sorted = timings_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  s.median_ms = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  s.timings_ms = std::move(timings_ms);
  return s;
}

namespace {

// Pins the calling thread to the CPU it is running on for its lifetime.
class CpuPin {
 public:
  CpuPin() {
#ifdef __linux__
    if (pthread_getaffinity_np(pthread_self(), sizeof(saved_), &saved_) != 0) return;
    const int cpu = sched_getcpu();
    if (cpu < 0) return;
    cpu_set_t one;
    CPU_ZERO(&one);
    CPU_SET(cpu, &one);
    active_ = pthread_setaffinity_np(pthread_self(), sizeof(one), &one) == 0;
#endif
  }
  ~CpuPin() {
#ifdef __linux__
    if (active_) pthread_setaffinity_np(pthread_self(), sizeof(saved_), &saved_);
#endif
  }
  CpuPin(const CpuPin&) = delete;
  CpuPin& operator=(const CpuPin&) = delete;

 private:
#ifdef __linux__
  cpu_set_t saved_{};
#endif
  bool active_ = false;
};

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(rows, cols);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

volatile double g_sink = 0.0;

double time_forward_ms(const ResidualNet& net, std::span<const Matrix> batches) {
  double sink = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (const Matrix& b : batches) sink += forward(net, b)(0, 0);
  const auto stop = std::chrono::steady_clock::now();
  g_sink = g_sink + sink;
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

std::vector<Matrix> split_batches(const Matrix& x, std::size_t batch_size) {
  if (batch_size == 0 || batch_size >= x.rows()) return {x};
  std::vector<Matrix> out;
  for (std::size_t start = 0; start < x.rows(); start += batch_size) {
    const std::size_t count = std::min(batch_size, x.rows() - start);
    Matrix b(count, x.cols());
    std::copy_n(x.row(start).begin(), count * x.cols(), b.data().begin());
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<LatencyStats> measure_latency_interleaved(std::span<const ResidualNet* const> nets,
                                                      const LatencyOptions& opts) {
  require(opts.n_samples >= 1, ErrorKind::InvalidArgument, "latency n_samples must be >= 1");
  require(opts.runs >= 1, ErrorKind::InvalidArgument, "latency runs must be >= 1");
  require(!nets.empty(), ErrorKind::InvalidArgument, "no networks to time");
  const std::size_t dim = nets.front()->spec.input_dim;
  for (const ResidualNet* n : nets)
    require(n->spec.input_dim == dim, ErrorKind::DimensionMismatch,
            "latency comparison needs a common input dimension");
  const std::vector<Matrix> x = split_batches(random_batch(opts.n_samples, dim, opts.seed),
                                              opts.batch_size);

  CpuPin pin;
  std::vector<std::vector<double>> timings(nets.size());
  for (std::size_t w = 0; w < opts.warmup_runs; ++w)
    for (const ResidualNet* n : nets) time_forward_ms(*n, x);
  // The starting net rotates every run so no net always follows another.
  for (std::size_t r = 0; r < opts.runs; ++r)
    for (std::size_t t = 0; t < nets.size(); ++t) {
      const std::size_t i = (r + t) % nets.size();
      timings[i].push_back(time_forward_ms(*nets[i], x));
    }

  std::vector<LatencyStats> out;
  for (auto& t : timings) out.push_back(summarize_timings(std::move(t), opts.n_samples));
  return out;
}

LatencyStats measure_latency(const ResidualNet& net, const LatencyOptions& opts) {
  const ResidualNet* one[] = {&net};
  return measure_latency_interleaved(one, opts).front();
}

LatencyComparison latency_compare(const ResidualNet& base,
                                  std::span<const PrunedVariant> layer_steps,
                                  std::span<const PrunedVariant> filter_steps,
                                  const LatencyOptions& opts, double tolerance) {
  require(tolerance >= 0.0, ErrorKind::InvalidArgument, "neuron tolerance must be >= 0");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < layer_steps.size(); ++i) {
    const double target = static_cast<double>(layer_steps[i].neurons_removed);
    std::size_t best = filter_steps.size();
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < filter_steps.size(); ++j) {
      const double gap = std::abs(static_cast<double>(filter_steps[j].neurons_removed) - target);
      if (gap < best_gap) {
        best_gap = gap;
        best = j;
      }
    }
    if (best < filter_steps.size() && best_gap <= tolerance * target) pairs.emplace_back(i, best);
  }
  if (pairs.empty())
    fail(ErrorKind::InvalidArgument, "no layer/filter steps match within the neuron tolerance");

  std::vector<const ResidualNet*> nets{&base};
  for (const auto& [i, j] : pairs) {
    nets.push_back(&layer_steps[i].net);
    nets.push_back(&filter_steps[j].net);
  }
  auto stats = measure_latency_interleaved(nets, opts);

  LatencyComparison cmp;
  cmp.base = std::move(stats[0]);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    LatencyPoint point;
    point.layer_neurons_removed = layer_steps[pairs[p].first].neurons_removed;
    point.filter_neurons_removed = filter_steps[pairs[p].second].neurons_removed;
    point.layer = std::move(stats[1 + 2 * p]);
    point.filter = std::move(stats[2 + 2 * p]);
    point.layer.speedup_vs_baseline = cmp.base.mean_ms / point.layer.mean_ms;
    point.filter.speedup_vs_baseline = cmp.base.mean_ms / point.filter.mean_ms;
    point.layer_speedup = point.layer.speedup_vs_baseline;
    point.filter_speedup = point.filter.speedup_vs_baseline;
    cmp.points.push_back(std::move(point));
  }
  return cmp;
}

Matrix fgsm(const ResidualNet& net, const Matrix& x, std::span<const int> labels,
            double epsilon) {
  require(epsilon >= 0.0 && std::isfinite(epsilon), ErrorKind::InvalidArgument,
          "FGSM epsilon must be finite and >= 0");
  if (epsilon == 0.0) return x;
  const Matrix grad = backprop(net, x, labels).input;
  Matrix adv = x;
  auto a = adv.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (g[i] == 0.0) continue;
    const double orig = a[i];
    const double step = g[i] > 0.0 ? epsilon : -epsilon;
    double v = orig + step;
    // Rounding of orig + step can overshoot the budget by an ulp.
    while (std::abs(v - orig) > epsilon) v = std::nextafter(v, orig);
    a[i] = v;
  }
  return adv;
}

const char* to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Gaussian: return "gaussian";
    case CorruptionKind::Uniform: return "uniform";
    case CorruptionKind::FeatureDropout: return "feature_dropout";
  }
  return "unknown";
}

CorruptionKind corruption_from_string(const std::string& s) {
  if (s == "gaussian") return CorruptionKind::Gaussian;
  if (s == "uniform") return CorruptionKind::Uniform;
  if (s == "feature_dropout") return CorruptionKind::FeatureDropout;
  fail(ErrorKind::InvalidArgument, "unknown corruption kind \"" + s + "\"");
}

Matrix corrupt(const Matrix& x, CorruptionKind kind, int severity, std::uint64_t seed) {
  require(severity >= 1 && severity <= 5, ErrorKind::InvalidArgument,
          "corruption severity must be in 1..5, got " + std::to_string(severity));
  std::vector<double> feature_std(x.cols(), 0.0);
  if (x.rows() > 0) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
      mean /= static_cast<double>(x.rows());
      double sq = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) sq += (x(r, c) - mean) * (x(r, c) - mean);
      feature_std[c] = std::sqrt(sq / static_cast<double>(x.rows()));
    }
  }
  const double scale = 0.05 * severity;
  Rng rng(seed);
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      switch (kind) {
        case CorruptionKind::Gaussian:
          out(r, c) += scale * feature_std[c] * rng.normal();
          break;
        case CorruptionKind::Uniform: {
          const double half = std::sqrt(3.0) * scale * feature_std[c];
          out(r, c) += rng.uniform(-half, half);
          break;
        }
        case CorruptionKind::FeatureDropout:
          if (rng.uniform() < 0.1 * severity) out(r, c) = 0.0;
          break;
      }
    }
  }
  return out;
}

RobustnessReport robustness_report(const ResidualNet& unpruned, const ResidualNet& pruned,
                                   const Dataset& data, std::span<const double> epsilons,
                                   const CorruptionConfig& corruption) {
  data.validate();
  RobustnessReport report;
  auto add = [&](std::string attack, double parameter, double a_unpruned, double a_pruned) {
    report.entries.push_back(
        {std::move(attack), parameter, a_unpruned, a_pruned, (a_pruned - a_unpruned) * 100.0});
  };
  add("clean", 0.0, evaluate(unpruned, data), evaluate(pruned, data));

  for (double eps : epsilons) {
    const double au = accuracy_from_logits(forward(unpruned, fgsm(unpruned, data.x, data.y, eps)), data.y);
    const double ap = accuracy_from_logits(forward(pruned, fgsm(pruned, data.x, data.y, eps)), data.y);
    add("fgsm", eps, au, ap);
  }

  const std::size_t repeats = std::max<std::size_t>(corruption.repeats, 1);
  for (CorruptionKind kind : corruption.kinds) {
    for (int severity : corruption.severities) {
      double au = 0.0, ap = 0.0;
      for (std::size_t r = 0; r < repeats; ++r) {
        const std::uint64_t seed =
            derive_seed(corruption.seed, (static_cast<std::uint64_t>(kind) << 32) |
                                             (static_cast<std::uint64_t>(severity) << 16) | r);
        const Matrix xc = corrupt(data.x, kind, severity, seed);
        au += accuracy_from_logits(forward(unpruned, xc), data.y);
        ap += accuracy_from_logits(forward(pruned, xc), data.y);
      }
      add(to_string(kind), severity, au / static_cast<double>(repeats),
          ap / static_cast<double>(repeats));
    }
  }
  return report;
}

double training_flops(std::uint64_t per_sample_flops, std::size_t samples, std::size_t epochs) {
  return 3.0 * static_cast<double>(per_sample_flops) * static_cast<double>(samples) *
         static_cast<double>(epochs);
}

Co2Estimate co2_estimate(double total_flops, const Co2Config& cfg) {
  require(cfg.throughput_flops > 0.0, ErrorKind::InvalidArgument, "CO2 throughput must be > 0");
  require(cfg.power_w > 0.0 && cfg.intensity_kg_per_kwh > 0.0, ErrorKind::InvalidArgument,
          "CO2 power and intensity must be > 0");
  require(total_flops > 0.0 && std::isfinite(total_flops), ErrorKind::InvalidArgument,
          "CO2 estimate needs a positive FLOP total");
  Co2Estimate e;
  e.flops_total = total_flops;
  e.assumed_throughput = cfg.throughput_flops;
  e.assumed_power_w = cfg.power_w;
  e.assumed_intensity = cfg.intensity_kg_per_kwh;
  e.energy_kwh = total_flops / cfg.throughput_flops * cfg.power_w / 3.6e6;
  e.co2_kg = e.energy_kwh * cfg.intensity_kg_per_kwh;
  return e;
}

double co2_reduction(const Co2Estimate& unpruned, const Co2Estimate& pruned) {
  require(unpruned.co2_kg > 0.0, ErrorKind::InvalidArgument, "baseline CO2 must be > 0");
  return 1.0 - pruned.co2_kg / unpruned.co2_kg;
}

}  // namespace ckaprune
