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

#include <optional>

#include "ckaprune/linalg.hpp"

namespace ckaprune {

/// Kernel used inside HSIC. An RBF kernel without an explicit bandwidth
/// uses the median pairwise Euclidean distance.
struct KernelKind {
  enum class Type { Linear, Rbf };

  Type type = Type::Linear;
  std::optional<double> bandwidth;

  static KernelKind linear() { return {}; }
  static KernelKind rbf(std::optional<double> bandwidth = std::nullopt) {
    return {Type::Rbf, bandwidth};
  }
};

struct SimilarityScore {
  double cka = 0.0;
  double score = 1.0;  // 1 - cka
  bool degenerate = false;
};

/// Relative self-HSIC threshold below which a representation is treated
/// as constant.
inline constexpr double kDegenerateThreshold = 1e-12;

/// Largest pre-clamp CKA overshoot above 1 tolerated as rounding.
inline constexpr double kOvershootTolerance = 1e-9;

/// Biased HSIC estimator tr(K H L H) / (n-1)^2.
double hsic_biased(const GramMatrix& k, const GramMatrix& l);

GramMatrix gram(const Matrix& x, const KernelKind& kernel);

/// Median of pairwise Euclidean distances between rows of \p x.
double median_pairwise_distance(const Matrix& x);

/// Centered kernel alignment through Gram matrices. Widths of \p x and
/// \p y may differ; sample counts must agree.
SimilarityScore cka(const Matrix& x, const Matrix& y, const KernelKind& kernel = {});

/// Linear CKA evaluated in feature space:
/// ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F). Same value as the Gram
/// route at O(n dx dy) cost.
SimilarityScore cka_linear_feature(const Matrix& x, const Matrix& y);

/// Importance score of a candidate layer: 1 - CKA between the unpruned
/// representation and the representation with the layer removed. Lower
/// means the removal preserves the representation better.
SimilarityScore layer_score(const Matrix& r, const Matrix& r_pruned,
                            const KernelKind& kernel = {});

}  // namespace ckaprune
