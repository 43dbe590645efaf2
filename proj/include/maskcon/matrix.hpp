#pragma once

#include <cstddef>
#include <vector>

namespace maskcon {

// Dense row-major matrix of doubles: the single numeric carrier for batches,
// parameters, similarities and relation rows.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool empty() const { return rows == 0 || cols == 0; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::size_t size() const { return data.size(); }
};

// c(n,m) = a(n,k) * b(k,m)
Matrix matmul(const Matrix& a, const Matrix& b);
// c(n,m) = a(n,k) * b(m,k)^T   (rows-dot-rows; both operands contiguous)
Matrix matmul_abt(const Matrix& a, const Matrix& b);
// c(k,m) = a(n,k)^T * b(n,m)   (weight-gradient shape)
Matrix matmul_atb(const Matrix& a, const Matrix& b);

// y += alpha * x (shape-checked)
void axpy(double alpha, const Matrix& x, Matrix& y);

double row_norm(const Matrix& m, std::size_t i);
bool all_finite(const Matrix& m);

}  // namespace maskcon
