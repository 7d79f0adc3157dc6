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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ckaprune {

/// Dense row-major matrix of doubles. Rows are samples, columns features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  /// Takes ownership of row-major data; rejects length mismatch and
  /// non-finite entries.
  static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::string shape() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Symmetric n x n matrix of pairwise kernel values.
class GramMatrix {
 public:
  /// Validates squareness and symmetry (1e-12 absolute).
  explicit GramMatrix(Matrix k);

  std::size_t n() const noexcept { return k_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return k_(i, j); }
  const Matrix& matrix() const noexcept { return k_; }

 private:
  struct Unchecked {};
  GramMatrix(Matrix k, Unchecked) : k_(std::move(k)) {}
  friend GramMatrix gram_linear(const Matrix&);
  friend GramMatrix center_gram(const GramMatrix&);
  friend GramMatrix gram_from_symmetric(Matrix);

  Matrix k_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// a * b^T without materialising the transpose of \p a.
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// a^T * b.
Matrix matmul_at(const Matrix& a, const Matrix& b);

GramMatrix gram_linear(const Matrix& x);

/// Builds a GramMatrix from a matrix the caller constructed symmetrically.
GramMatrix gram_from_symmetric(Matrix k);

/// H K H with H = I - (1/n) 1 1^T.
GramMatrix center_gram(const GramMatrix& k);

/// Subtracts column means.
Matrix center_columns(const Matrix& x);

double frob_inner(const Matrix& a, const Matrix& b);
double frob_norm(const Matrix& a);

}  // namespace ckaprune
