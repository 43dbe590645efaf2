#include "maskcon/matrix.hpp"

#include <cmath>

#include "maskcon/errors.hpp"

namespace maskcon {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeMismatch("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw ShapeMismatch("matmul_abt: inner dimensions differ");
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
  return c;
}

Matrix matmul_atb(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeMismatch("matmul_atb: outer dimensions differ");
  Matrix c(a.cols, b.cols);
  for (std::size_t n = 0; n < a.rows; ++n) {
    const double* arow = a.row(n);
    const double* brow = b.row(n);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double ank = arow[k];
      if (ank == 0.0) continue;
      double* crow = c.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += ank * brow[j];
    }
  }
  return c;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  if (!x.same_shape(y)) throw ShapeMismatch("axpy: shape mismatch");
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

double row_norm(const Matrix& m, std::size_t i) {
  const double* r = m.row(i);
  double acc = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * r[j];
  return std::sqrt(acc);
}

bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace maskcon
