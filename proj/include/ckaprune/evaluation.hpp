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
#include <span>
#include <string>
#include <vector>

#include "ckaprune/network.hpp"
#include "ckaprune/training.hpp"

namespace ckaprune {

// ---- latency -------------------------------------------------------------

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double std_ms = 0.0;  // sample std; 0 for a single run
  std::size_t runs = 0;
  std::size_t n_samples = 0;
  double speedup_vs_baseline = 1.0;
  std::vector<double> timings_ms;  // raw per-run timings, measurement order
};

/// Aggregates raw timings; the source of truth for every reported figure.
LatencyStats summarize_timings(std::vector<double> timings_ms, std::size_t n_samples);

struct LatencyOptions {
  std::size_t n_samples = 10000;
  std::size_t runs = 30;
  std::size_t warmup_runs = 3;
  /// Samples per forward call; one run forwards n_samples in batches of
  /// this size. 0 forwards everything in a single call.
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Wall-clock time of forward() over a fixed random batch on the calling
/// thread, after discarding warmup runs.
LatencyStats measure_latency(const ResidualNet& net, const LatencyOptions& opts);

/// Measures several nets with runs interleaved round-robin so slow drift
/// in machine load affects all of them alike.
std::vector<LatencyStats> measure_latency_interleaved(std::span<const ResidualNet* const> nets,
                                                      const LatencyOptions& opts);

struct PrunedVariant {
  ResidualNet net;
  std::size_t neurons_removed = 0;
};

struct LatencyPoint {
  std::size_t layer_neurons_removed = 0;
  std::size_t filter_neurons_removed = 0;
  double layer_speedup = 1.0;
  double filter_speedup = 1.0;
  LatencyStats layer;
  LatencyStats filter;
};

struct LatencyComparison {
  LatencyStats base;
  std::vector<LatencyPoint> points;
};

/// Pairs each layer-pruned step with the filter-pruned step whose removed
/// neuron count is closest, keeping pairs within \p tolerance (relative),
/// and reports speedup = base mean / pruned mean.
LatencyComparison latency_compare(const ResidualNet& base,
                                  std::span<const PrunedVariant> layer_steps,
                                  std::span<const PrunedVariant> filter_steps,
                                  const LatencyOptions& opts, double tolerance = 0.05);

// ---- robustness ----------------------------------------------------------

/// x + epsilon * sign(d loss / d x), with sign(0) = 0.
Matrix fgsm(const ResidualNet& net, const Matrix& x, std::span<const int> labels,
            double epsilon);

enum class CorruptionKind { Gaussian, Uniform, FeatureDropout };

const char* to_string(CorruptionKind kind);
CorruptionKind corruption_from_string(const std::string& s);

/// Severity 1..5. Gaussian noise has std 0.05 * severity * feature std;
/// uniform noise has the same std; dropout zeroes features with
/// probability 0.1 * severity. Feature std is taken from \p x.
Matrix corrupt(const Matrix& x, CorruptionKind kind, int severity, std::uint64_t seed);

struct CorruptionConfig {
  std::vector<CorruptionKind> kinds{CorruptionKind::Gaussian, CorruptionKind::Uniform,
                                    CorruptionKind::FeatureDropout};
  std::vector<int> severities{1, 2, 3, 4, 5};
  std::size_t repeats = 1;  // seeds averaged per (kind, severity)
  std::uint64_t seed = 0;
};

struct RobustnessEntry {
  std::string attack;  // "clean", "fgsm", or a corruption kind
  double parameter = 0.0;  // epsilon or severity
  double acc_unpruned = 0.0;
  double acc_pruned = 0.0;
  double delta_pp = 0.0;  // (pruned - unpruned) * 100, positive = improvement
};

struct RobustnessReport {
  std::vector<RobustnessEntry> entries;  // first entry is clean accuracy
};

RobustnessReport robustness_report(const ResidualNet& unpruned, const ResidualNet& pruned,
                                   const Dataset& data, std::span<const double> epsilons,
                                   const CorruptionConfig& corruption);

// ---- compute / CO2 -------------------------------------------------------

struct Co2Config {
  double throughput_flops = 1e12;   // sustained FLOP/s
  double power_w = 250.0;
  double intensity_kg_per_kwh = 0.475;
};

struct Co2Estimate {
  double flops_total = 0.0;
  double assumed_throughput = 0.0;
  double assumed_power_w = 0.0;
  double assumed_intensity = 0.0;
  double energy_kwh = 0.0;
  double co2_kg = 0.0;
};

/// Forward + backward cost of training: 3 x forward FLOPs per sample.
double training_flops(std::uint64_t per_sample_flops, std::size_t samples, std::size_t epochs);

/// energy = flops / throughput * power / 3.6e6 kWh, co2 = energy * intensity.
Co2Estimate co2_estimate(double total_flops, const Co2Config& cfg);

/// 1 - co2(pruned) / co2(unpruned).
double co2_reduction(const Co2Estimate& unpruned, const Co2Estimate& pruned);

}  // namespace ckaprune
