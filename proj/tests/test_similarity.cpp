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

#include "ckaprune/error.hpp"
#include "ckaprune/linalg.hpp"
#include "ckaprune/rng.hpp"
#include "ckaprune/similarity.hpp"
#include "doctest.h"

using namespace ckaprune;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

Matrix naive_mul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

double trace(const Matrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

// tr(K H L H) / (n-1)^2 with H materialised.
double hsic_explicit(const Matrix& k, const Matrix& l) {
  const std::size_t n = k.rows();
  Matrix h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
  const double nm1 = static_cast<double>(n - 1);
  return trace(naive_mul(naive_mul(naive_mul(k, h), l), h)) / (nm1 * nm1);
}

// Expanded double-sum form of the same estimator.
double hsic_double_sum(const Matrix& k, const Matrix& l) {
  const std::size_t n = k.rows();
  const double dn = static_cast<double>(n);
  double kl = 0.0, sk = 0.0, sl = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double ki = 0.0, li = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      kl += k(i, j) * l(i, j);
      ki += k(i, j);
      li += l(i, j);
    }
    sk += ki;
    sl += li;
    cross += ki * li;
  }
  return (kl - 2.0 * cross / dn + sk * sl / (dn * dn)) / ((dn - 1.0) * (dn - 1.0));
}

Matrix linear_kernel(const Matrix& x) { return naive_mul(x, transpose(x)); }

double cka_brute(const Matrix& x, const Matrix& y) {
  const Matrix k = linear_kernel(x);
  const Matrix l = linear_kernel(y);
  return hsic_explicit(k, l) / std::sqrt(hsic_explicit(k, k) * hsic_explicit(l, l));
}

Matrix random_orthogonal(std::size_t d, Rng& rng) {
  // Gram-Schmidt on a Gaussian matrix.
  Matrix q = random_matrix(d, d, rng);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += q(i, j) * q(i, p);
      for (std::size_t i = 0; i < d; ++i) q(i, j) -= dot * q(i, p);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
  }
  return q;
}

}  // namespace

TEST_CASE("hsic of a constant kernel is zero") {
  Rng rng(1);
  const GramMatrix k = gram_linear(Matrix(6, 3, 1.5));
  const GramMatrix l = gram_linear(random_matrix(6, 2, rng));
  CHECK(std::abs(hsic_biased(k, l)) < 1e-12);
}

TEST_CASE("hsic of the two-point kernel") {
  const GramMatrix k = gram_linear(Matrix::from_rows({{1}, {-1}}));
  // K = [[1,-1],[-1,1]] is already centred: tr(K K) = 4, (n-1)^2 = 1.
  CHECK(hsic_biased(k, k) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(hsic_double_sum(k.matrix(), k.matrix()) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("hsic agrees with explicit and double-sum oracles") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = random_matrix(8, 3, rng);
    const Matrix y = random_matrix(8, 5, rng);
    const GramMatrix k = gram_linear(x);
    const GramMatrix l = gram_linear(y);
    const double h = hsic_biased(k, l);
    const double e = hsic_explicit(k.matrix(), l.matrix());
    const double d = hsic_double_sum(k.matrix(), l.matrix());
    CHECK(std::abs(h - e) <= 1e-10 * std::abs(e));
    CHECK(std::abs(h - d) <= 1e-10 * std::abs(e));
    CHECK(h >= -1e-12);
  }
}

TEST_CASE("hsic rejects mismatched and tiny inputs") {
  Rng rng(3);
  CHECK_THROWS_AS(hsic_biased(gram_linear(random_matrix(4, 2, rng)), gram_linear(random_matrix(5, 2, rng))),
                  Error);
  CHECK_THROWS_AS(gram_linear(random_matrix(1, 2, rng)), Error);
}

TEST_CASE("cka of a representation with itself is one") {
  Rng rng(4);
  const Matrix r = random_matrix(10, 4, rng);
  for (auto kernel : {KernelKind::linear(), KernelKind::rbf()}) {
    const SimilarityScore s = cka(r, r, kernel);
    CHECK(s.cka == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.score == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(s.degenerate);
  }
}

TEST_CASE("centred orthogonal features have zero cka") {
  const Matrix x = Matrix::from_rows({{1}, {-1}, {1}, {-1}});
  const Matrix y = Matrix::from_rows({{1}, {1}, {-1}, {-1}});
  const SimilarityScore s = cka(x, y);
  CHECK(std::abs(s.cka) < 1e-15);
  CHECK(s.score == doctest::Approx(1.0));
  CHECK(cka_linear_feature(x, y).cka < 1e-15);
}

TEST_CASE("gram, feature and brute-force cka agree") {
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(15);
    const Matrix x = random_matrix(n, 1 + rng.below(8), rng);
    const Matrix y = random_matrix(n, 1 + rng.below(8), rng);
    const double g = cka(x, y).cka;
    const double f = cka_linear_feature(x, y).cka;
    const double b = std::clamp(cka_brute(x, y), 0.0, 1.0);
    worst = std::max({worst, std::abs(g - f), std::abs(g - b)});
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("feature cka on 8x3 versus 8x5") {
  Rng rng(6);
  const Matrix x = random_matrix(8, 3, rng);
  const Matrix y = random_matrix(8, 5, rng);
  // Direct evaluation of the feature-space expression.
  const Matrix xc = center_columns(x);
  const Matrix yc = center_columns(y);
  const Matrix yx = naive_mul(transpose(yc), xc);
  const Matrix xx = naive_mul(transpose(xc), xc);
  const Matrix yy = naive_mul(transpose(yc), yc);
  const double expect = frob_inner(yx, yx) / (frob_norm(xx) * frob_norm(yy));
  CHECK(std::abs(cka(x, y).cka - expect) < 1e-10);
}

TEST_CASE("cka is invariant to orthogonal transforms and isotropic scaling") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = random_matrix(12, 5, rng);
    const Matrix y = random_matrix(12, 4, rng);
    const double base = cka(x, y).cka;
    const Matrix xq = naive_mul(x, random_orthogonal(5, rng));
    CHECK(std::abs(cka(xq, y).cka - base) < 1e-8);
    for (double alpha : {1e-3, 0.5, 7.0, 1e3}) {
      Matrix xs = x;
      for (double& v : xs.data()) v *= alpha;
      CHECK(std::abs(cka(xs, y).cka - base) < 1e-8);
      CHECK(std::abs(cka_linear_feature(xs, y).cka - base) < 1e-8);
    }
    CHECK(std::abs(cka(y, x).cka - base) < 1e-12);
    CHECK((base >= 0.0 && base <= 1.0));
  }
}

TEST_CASE("column permutation leaves cka at one") {
  Rng rng(8);
  const Matrix x = random_matrix(9, 4, rng);
  Matrix p(9, 4);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 4; ++c) p(i, c) = x(i, 3 - c);
  CHECK(cka(x, p).cka == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cka_linear_feature(x, p).cka == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rbf gram is positive semidefinite") {
  Rng rng(9);
  const Matrix x = random_matrix(10, 3, rng);
  const Matrix k = gram(x, KernelKind::rbf()).matrix();
  // Quadratic forms over random directions never go negative.
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(10);
    for (double& e : v) e = rng.normal();
    double q = 0.0;
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) q += v[i] * k(i, j) * v[j];
    CHECK(q >= -1e-12);
  }
  for (std::size_t i = 0; i < 10; ++i) CHECK(k(i, i) == 1.0);
}

TEST_CASE("median pairwise distance") {
  const Matrix x = Matrix::from_rows({{0, 0}, {3, 4}, {6, 8}});
  // distances 5, 10, 5
  CHECK(median_pairwise_distance(x) == doctest::Approx(5.0));
  const Matrix y = Matrix::from_rows({{0}, {1}, {3}, {6}});
  // distances 1, 3, 6, 2, 5, 3 -> sorted 1 2 3 3 5 6
  CHECK(median_pairwise_distance(y) == doctest::Approx(3.0));
}

TEST_CASE("rbf with explicit bandwidth") {
  const Matrix x = Matrix::from_rows({{0}, {1}});
  const Matrix k = gram(x, KernelKind::rbf(2.0)).matrix();
  CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-15));
  CHECK_THROWS_AS(gram(x, KernelKind::rbf(0.0)), Error);
}

TEST_CASE("constant representation is degenerate") {
  Rng rng(10);
  const Matrix r = random_matrix(8, 3, rng);
  const Matrix c(8, 3, 2.0);
  for (auto kernel : {KernelKind::linear(), KernelKind::rbf()}) {
    const SimilarityScore s = layer_score(r, c, kernel);
    CHECK(s.degenerate);
    CHECK(s.cka == 0.0);
    CHECK(s.score == 1.0);
  }
  CHECK(layer_score(c, c).degenerate);
  CHECK(cka(Matrix(8, 3), r).degenerate);
}

TEST_CASE("layer score is one minus cka") {
  Rng rng(11);
  const Matrix r = random_matrix(16, 4, rng);
  Matrix rp = r;
  for (double& v : rp.data()) v += 0.3 * rng.normal();
  const SimilarityScore s = layer_score(r, rp);
  CHECK(std::abs(s.score - (1.0 - s.cka)) < 1e-15);
  CHECK(layer_score(r, r).score == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cka input validation") {
  Rng rng(12);
  CHECK_THROWS_AS(cka(random_matrix(5, 2, rng), random_matrix(6, 2, rng)), Error);
  CHECK_THROWS_AS(cka(random_matrix(1, 2, rng), random_matrix(1, 2, rng)), Error);
  Matrix bad = random_matrix(5, 2, rng);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(cka(bad, random_matrix(5, 2, rng)), Error);
  CHECK_THROWS_AS(cka_linear_feature(bad, random_matrix(5, 2, rng)), Error);
}
