#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sfd {

// Dense row-major matrix of doubles. Deliberately minimal: the library only
// needs matmul in a few transpose layouts, Gaussian gram blocks, and an SPD
// solve, and keeping these as fixed-order loops makes runs reproducible.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::span<const double> row_span(std::size_t i) const {
    return {row(i), cols};
  }
};

// C = A * B. A is n x k, B is k x m.
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T. A is n x k, B is m x k.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = A^T * B. A is n x k, B is n x m.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// G(i,j) = exp(-||x_i - y_j||^2 / (2 sigma^2)), computed per pair from the
// explicit difference so G(i,i) on identical inputs is exactly 1 and the
// block is exactly symmetric when x == y.
Matrix gaussian_gram(const Matrix& x, const Matrix& y, double sigma);

// Solves A v = b for symmetric positive definite A via Cholesky. If the
// factorization hits a non-positive pivot, retries once with a small ridge
// (1e-9 * trace/n) added to the diagonal; a second failure raises
// NumericalError carrying the pivot index. The returned solution satisfies
// ||A v - b||_inf <= 1e-8 * max(1, ||b||_inf), enforced with at most two
// refinement passes.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

// Lower empirical quantile: sorted[max(0, ceil(q * n) - 1)].
// q must lie in [0, 1]; values must be nonempty and free of NaN.
double quantile(std::span<const double> values, double q);

// Max-subtracted softmax; output sums to 1 within 1e-12.
std::vector<double> softmax(std::span<const double> logits);
// Row-wise softmax of a logits matrix.
Matrix softmax_rows(const Matrix& logits);

// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace sfd
