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

#include "ckaprune/linalg.hpp"

#include <cmath>

#include "ckaprune/error.hpp"

namespace ckaprune {

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
  require(data.size() == rows * cols, ErrorKind::DimensionMismatch,
          "matrix data length " + std::to_string(data.size()) + " does not match " +
              std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  require(m.all_finite(), ErrorKind::Numeric, "matrix contains NaN or Inf");
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorKind::DimensionMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return from_data(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

GramMatrix::GramMatrix(Matrix k) : k_(std::move(k)) {
  require(k_.rows() == k_.cols(), ErrorKind::DimensionMismatch,
          "Gram matrix must be square, got " + k_.shape());
  for (std::size_t i = 0; i < k_.rows(); ++i)
    for (std::size_t j = i + 1; j < k_.cols(); ++j)
      require(std::abs(k_(i, j) - k_(j, i)) <= 1e-12, ErrorKind::InvalidArgument,
              "Gram matrix is not symmetric at (" + std::to_string(i) + "," +
                  std::to_string(j) + ")");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::DimensionMismatch,
          "matmul shape mismatch: " + a.shape() + " times " + b.shape());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorKind::DimensionMismatch,
          "matmul_bt shape mismatch: " + a.shape() + " times transpose of " + b.shape());
  return matmul(a, transpose(b));
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorKind::DimensionMismatch,
          "matmul_at shape mismatch: transpose of " + a.shape() + " times " + b.shape());
  Matrix out(a.cols(), b.cols());
  for (std::size_t s = 0; s < a.rows(); ++s) {
    auto a_row = a.row(s);
    auto b_row = b.row(s);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = a_row[i];
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += ai * b_row[j];
    }
  }
  return out;
}

GramMatrix gram_linear(const Matrix& x) {
  require(x.rows() >= 2, ErrorKind::InvalidArgument,
          "HSIC needs at least 2 samples, got " + std::to_string(x.rows()));
  const std::size_t n = x.rows();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t j = i; j < n; ++j) {
      auto xj = x.row(j);
      double dot = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) dot += xi[c] * xj[c];
      k(i, j) = dot;
      k(j, i) = dot;
    }
  }
  return GramMatrix(std::move(k), GramMatrix::Unchecked{});
}

GramMatrix gram_from_symmetric(Matrix k) {
  return GramMatrix(std::move(k));
}

GramMatrix center_gram(const GramMatrix& gram) {
  const Matrix& k = gram.matrix();
  const std::size_t n = k.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k(i, j);
    row_mean[i] = s * inv_n;
    grand += s;
  }
  grand *= inv_n * inv_n;
  // Row and column means coincide for symmetric K; filling the upper
  // triangle and mirroring keeps the result exactly symmetric.
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = (k(i, j) - row_mean[i] - row_mean[j]) + grand;
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return GramMatrix(std::move(out), GramMatrix::Unchecked{});
}

Matrix center_columns(const Matrix& x) {
  Matrix out = x;
  if (x.rows() == 0) return out;
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(i, c);
  for (double& m : mean) m /= static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) -= mean[c];
  return out;
}

double frob_inner(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::DimensionMismatch,
          "frob_inner shape mismatch: " + a.shape() + " vs " + b.shape());
  auto da = a.data();
  auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) sum += da[i] * db[i];
  return sum;
}

double frob_norm(const Matrix& a) { return std::sqrt(frob_inner(a, a)); }

}  // namespace ckaprune
