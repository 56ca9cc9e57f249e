#include "rws/projection.hpp"

#include <cmath>

#include "rws/errors.hpp"
#include "rws/tensor.hpp"

namespace rws {

double projection_coefficient(std::span<const float> base, std::span<const float> target) {
  const double bb = dot(base, base);
  if (bb == 0.0) return 0.0;
  return dot(target, base) / bb;
}

void cholesky_solve(std::vector<double>& a, std::vector<double>& rhs, std::size_t n, std::size_t m) {
  // Lower factor overwrites the lower triangle of a.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw ValidationError("cholesky_solve: matrix is not positive definite");
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  // L Y = R
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &rhs[i * m];
    for (std::size_t k = 0; k < i; ++k) {
      const double l = a[i * n + k];
      const double* src = &rhs[k * m];
      for (std::size_t c = 0; c < m; ++c) row[c] -= l * src[c];
    }
    const double inv = 1.0 / a[i * n + i];
    for (std::size_t c = 0; c < m; ++c) row[c] *= inv;
  }
  // L^T X = Y
  for (std::size_t ii = n; ii-- > 0;) {
    double* row = &rhs[ii * m];
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double l = a[k * n + ii];
      const double* src = &rhs[k * m];
      for (std::size_t c = 0; c < m; ++c) row[c] -= l * src[c];
    }
    const double inv = 1.0 / a[ii * n + ii];
    for (std::size_t c = 0; c < m; ++c) row[c] *= inv;
  }
}

std::vector<double> matrix_residual(std::span<const double> base, std::span<const double> target, std::size_t rows,
                                    std::size_t cols) {
  if (base.size() != rows * cols || target.size() != rows * cols) {
    throw DimensionError("matrix_residual: operand size does not match rows x cols");
  }
  const std::size_t n = cols;
  std::vector<double> gram(n * n, 0.0);
  std::vector<double> rhs(n * n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* b = &base[r * cols];
    const double* c = &target[r * cols];
    for (std::size_t i = 0; i < n; ++i) {
      const double bi = b[i];
      if (bi == 0.0) continue;
      double* g = &gram[i * n];
      double* h = &rhs[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        g[j] += bi * b[j];
        h[j] += bi * c[j];
      }
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += gram[i * n + i];
  std::vector<double> residual(target.begin(), target.end());
  if (trace == 0.0) return residual;
  const double eps = kRidgeScale * trace / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) gram[i * n + i] += eps;

  cholesky_solve(gram, rhs, n, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* b = &base[r * cols];
    double* out = &residual[r * cols];
    for (std::size_t k = 0; k < n; ++k) {
      const double bk = b[k];
      if (bk == 0.0) continue;
      const double* x = &rhs[k * n];
      for (std::size_t j = 0; j < n; ++j) out[j] -= bk * x[j];
    }
  }
  return residual;
}

}  // namespace rws
