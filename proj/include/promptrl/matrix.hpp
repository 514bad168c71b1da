// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace promptrl {

// Dense row-major matrix of doubles. Rows are contiguous so per-row views
// can be handed out as raw pointers.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b^T
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);

void add_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);

double dot(const double* a, const double* b, int n);

}  // namespace promptrl
