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

#include "ckaprune/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ckaprune/error.hpp"

namespace ckaprune {

namespace {

void check_pair(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows(), ErrorKind::DimensionMismatch,
          "CKA sample count mismatch: " + x.shape() + " vs " + y.shape());
  require(x.rows() >= 2, ErrorKind::InvalidArgument,
          "CKA needs at least 2 samples, got " + std::to_string(x.rows()));
  require(x.all_finite() && y.all_finite(), ErrorKind::Numeric,
          "CKA input contains NaN or Inf");
}

// Self-similarity terms are compared against the squared norm of the
// uncentered kernel so the degeneracy test is scale free.
bool is_degenerate(double centered_sq, double uncentered_sq) {
  return uncentered_sq <= 0.0 || centered_sq <= kDegenerateThreshold * uncentered_sq;
}

SimilarityScore finish(double cross, double self_x, double self_y, bool degenerate) {
  SimilarityScore s;
  if (degenerate) {
    s.cka = 0.0;
    s.score = 1.0;
    s.degenerate = true;
    return s;
  }
  const double raw = cross / std::sqrt(self_x * self_y);
  require(std::isfinite(raw), ErrorKind::Numeric, "CKA evaluated to a non-finite value");
  if (raw > 1.0 + kOvershootTolerance)
    fail(ErrorKind::Internal, "CKA overshoot beyond rounding tolerance: " + std::to_string(raw));
  s.cka = std::clamp(raw, 0.0, 1.0);
  s.score = 1.0 - s.cka;
  return s;
}

}  // namespace

double hsic_biased(const GramMatrix& k, const GramMatrix& l) {
  require(k.n() == l.n(), ErrorKind::DimensionMismatch,
          "HSIC size mismatch: " + std::to_string(k.n()) + " vs " + std::to_string(l.n()));
  require(k.n() >= 2, ErrorKind::InvalidArgument, "HSIC needs at least 2 samples");
  const double denom = static_cast<double>(k.n() - 1) * static_cast<double>(k.n() - 1);
  return frob_inner(center_gram(k).matrix(), center_gram(l).matrix()) / denom;
}

double median_pairwise_distance(const Matrix& x) {
  std::vector<double> d;
  d.reserve(x.rows() * (x.rows() - 1) / 2);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double diff = x(i, c) - x(j, c);
        sq += diff * diff;
      }
      d.push_back(std::sqrt(sq));
    }
  }
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size() / 2;
  return d.size() % 2 == 1 ? d[m] : 0.5 * (d[m - 1] + d[m]);
}

GramMatrix gram(const Matrix& x, const KernelKind& kernel) {
  if (kernel.type == KernelKind::Type::Linear) return gram_linear(x);

  require(x.rows() >= 2, ErrorKind::InvalidArgument, "HSIC needs at least 2 samples");
  double bandwidth = 0.0;
  if (kernel.bandwidth) {
    bandwidth = *kernel.bandwidth;
    require(bandwidth > 0.0 && std::isfinite(bandwidth), ErrorKind::InvalidArgument,
            "RBF bandwidth must be positive");
  } else {
    bandwidth = median_pairwise_distance(x);
    // Mostly duplicated rows: any positive width works, constant inputs
    // end up degenerate regardless.
    if (bandwidth <= 0.0) bandwidth = 1.0;
  }
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  const std::size_t n = x.rows();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double diff = x(i, c) - x(j, c);
        sq += diff * diff;
      }
      const double v = std::exp(scale * sq);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return gram_from_symmetric(std::move(k));
}

SimilarityScore cka(const Matrix& x, const Matrix& y, const KernelKind& kernel) {
  check_pair(x, y);
  const GramMatrix kx = gram(x, kernel);
  const GramMatrix ky = gram(y, kernel);
  const Matrix cx = center_gram(kx).matrix();
  const Matrix cy = center_gram(ky).matrix();
  const double self_x = frob_inner(cx, cx);
  const double self_y = frob_inner(cy, cy);
  const bool degenerate = is_degenerate(self_x, frob_inner(kx.matrix(), kx.matrix())) ||
                          is_degenerate(self_y, frob_inner(ky.matrix(), ky.matrix()));
  // The (n-1)^-2 factors of the three HSIC terms cancel in the ratio.
  return finish(frob_inner(cx, cy), self_x, self_y, degenerate);
}

SimilarityScore cka_linear_feature(const Matrix& x, const Matrix& y) {
  check_pair(x, y);
  const Matrix xc = center_columns(x);
  const Matrix yc = center_columns(y);
  const Matrix cross = matmul_at(yc, xc);
  const Matrix sxx = matmul_at(xc, xc);
  const Matrix syy = matmul_at(yc, yc);
  const double self_x = frob_inner(sxx, sxx);
  const double self_y = frob_inner(syy, syy);
  const Matrix rx = matmul_at(x, x);
  const Matrix ry = matmul_at(y, y);
  const bool degenerate =
      is_degenerate(self_x, frob_inner(rx, rx)) || is_degenerate(self_y, frob_inner(ry, ry));
  return finish(frob_inner(cross, cross), self_x, self_y, degenerate);
}

SimilarityScore layer_score(const Matrix& r, const Matrix& r_pruned, const KernelKind& kernel) {
  if (kernel.type == KernelKind::Type::Linear) return cka_linear_feature(r, r_pruned);
  return cka(r, r_pruned, kernel);
}

}  // namespace ckaprune
