#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rws {

// <target, base> / <base, base>, or 0 when base is the zero vector.
double projection_coefficient(std::span<const float> base, std::span<const float> target);

// Relative ridge applied to the Gram matrix in matrix mode.
inline constexpr double kRidgeScale = 1e-8;

/*
 * Column-space residual C - B X with X solving (B^T B + eps I) X = B^T C,
 * eps = kRidgeScale * mean(diag(B^T B)). B and C are row-major rows x cols.
 * A zero base matrix yields C unchanged.
 */
std::vector<double> matrix_residual(std::span<const double> base, std::span<const double> target, std::size_t rows,
                                    std::size_t cols);

// In-place Cholesky solve of the SPD system A X = R; A is n x n, R is n x m, both row-major.
void cholesky_solve(std::vector<double>& a, std::vector<double>& rhs, std::size_t n, std::size_t m);

}  // namespace rws
