#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "maskcon/matrix.hpp"
#include "maskcon/rng.hpp"

namespace testutil {

inline maskcon::Matrix rand_matrix(maskcon::Rng& rng, std::size_t r,
                                   std::size_t c, double lo = -1.0,
                                   double hi = 1.0) {
  maskcon::Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

inline maskcon::Matrix rand_unit_rows(maskcon::Rng& rng, std::size_t r,
                                      std::size_t c) {
  maskcon::Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double n = 0.0;
    do {
      n = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        m(i, j) = rng.normal();
        n += m(i, j) * m(i, j);
      }
      n = std::sqrt(n);
    } while (n < 1e-6);
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= n;
  }
  return m;
}

// plain scalar-loop cosine, independent of the library implementation
inline double cos_oracle(const double* a, const double* b, std::size_t d) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    ab += a[j] * b[j];
    aa += a[j] * a[j];
    bb += b[j] * b[j];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline double max_abs_diff(const maskcon::Matrix& a, const maskcon::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// relative error with a floor above the central-difference noise level
// (roundoff ~1e-11 at h=1e-5), so zero-gradient coordinates compare sanely
inline double max_rel_err(const std::vector<maskcon::Matrix>& got,
                          const std::vector<maskcon::Matrix>& want) {
  double worst = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) {
    for (std::size_t i = 0; i < got[k].data.size(); ++i) {
      const double g = got[k].data[i];
      const double w = want[k].data[i];
      const double denom = std::max({std::abs(g), std::abs(w), 1e-6});
      worst = std::max(worst, std::abs(g - w) / denom);
    }
  }
  return worst;
}

}  // namespace testutil
