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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ckaprune/linalg.hpp"
#include "ckaprune/network.hpp"

namespace ckaprune {

struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return y.size(); }
  void validate() const;
};

struct DataSplit {
  Dataset train;
  Dataset test;
  /// Original label strings indexed by dense class id (CSV input only).
  std::vector<std::string> label_names;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Std of additive Gaussian input noise per batch; 0 disables it.
  double jitter = 0.0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  /// Filled only when a test split is supplied to train().
  std::vector<double> test_accuracy;
};

struct TrainResult {
  ResidualNet net;
  TrainHistory history;
};

/// Mean softmax cross-entropy.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Mean loss with gradients for every parameter (stored in a zero-shaped
/// copy of the net) and for the inputs.
struct Gradients {
  double loss = 0.0;
  ResidualNet params;
  Matrix input;
  Matrix logits;
};

Gradients backprop(const ResidualNet& net, const Matrix& x, std::span<const int> labels);

TrainResult train(const ResidualNet& net, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* test = nullptr);

/// Same optimiser as train(); used after each removal.
ResidualNet finetune(const ResidualNet& net, const Dataset& data, const TrainConfig& cfg);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row);

/// Top-1 accuracy.
double evaluate(const ResidualNet& net, const Dataset& data);
double accuracy_from_logits(const Matrix& logits, std::span<const int> labels);

/// Gaussian mixture with class means uniform on the unit sphere and
/// isotropic noise of scale \p spread, split 80/20 per class.
DataSplit synth_dataset(std::size_t n, std::size_t dim, std::size_t classes, double spread,
                        std::uint64_t seed);

struct CsvTable {
  Dataset data;
  std::vector<std::string> feature_names;
  std::vector<std::string> label_names;
};

/// Comma-separated file with a header row. Labels are remapped to
/// 0..C-1 in first-seen order.
CsvTable load_csv(const std::filesystem::path& path, const std::string& label_column);

DataSplit stratified_split(const Dataset& data, double train_fraction, std::uint64_t seed);

Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

/// Seeded class-balanced sample of row indices, returned sorted.
std::vector<std::size_t> stratified_sample(const Dataset& data, std::size_t count,
                                           std::uint64_t seed);

}  // namespace ckaprune
