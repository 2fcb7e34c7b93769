#include "sfd/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfd/error.hpp"

namespace sfd {
namespace {

void require_finite(const Matrix& m, const char* name) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw ParameterError(std::string(name) + ": non-finite entry");
    }
  }
}

// In-place lower Cholesky of a copy of A. Returns the failing pivot index,
// or -1 on success.
std::ptrdiff_t cholesky(Matrix& a) {
  const std::size_t n = a.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
    if (!(d > 0.0)) return static_cast<std::ptrdiff_t>(j);
    const double ljj = std::sqrt(d);
    a.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
      a.at(i, j) = s / ljj;
    }
  }
  return -1;
}

// Solves L L^T v = b given the lower factor in a's lower triangle.
std::vector<double> chol_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
    y[i] = s / l.at(i, i);
  }
  std::vector<double> v(n);
  for (std::size_t ii = n; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double s = y[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l.at(k, i) * v[k];
    v[i] = s / l.at(i, i);
  }
  return v;
}

std::vector<double> residual(const Matrix& a, std::span<const double> v,
                             std::span<const double> b) {
  const std::size_t n = a.rows;
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* ai = a.row(i);
    for (std::size_t j = 0; j < n; ++j) s += ai[j] * v[j];
    r[i] = s - b[i];
  }
  return r;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix c(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    for (std::size_t r = 0; r < a.cols; ++r) {
      const double air = ai[r];
      double* cr = c.row(r);
      for (std::size_t j = 0; j < b.cols; ++j) cr[j] += air * bi[j];
    }
  }
  return c;
}

Matrix gaussian_gram(const Matrix& x, const Matrix& y, double sigma) {
  if (x.cols != y.cols) throw ShapeError("gaussian_gram: dimension mismatch");
  if (!(sigma > 0.0)) throw ParameterError("gaussian_gram: sigma must be positive");
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Matrix g(x.rows, y.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* gi = g.row(i);
    for (std::size_t j = 0; j < y.rows; ++j) {
      const double* yj = y.row(j);
      double s = 0.0;
      for (std::size_t d = 0; d < x.cols; ++d) {
        const double t = xi[d] - yj[d];
        s += t * t;
      }
      gi[j] = std::exp(-s * inv);
    }
  }
  return g;
}

std::vector<double> solve_spd(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows;
  if (n == 0 || a.cols != n) throw ShapeError("solve_spd: matrix must be square");
  if (b.size() != n) throw ShapeError("solve_spd: rhs length mismatch");
  require_finite(a, "solve_spd");
  for (double v : b) {
    if (!std::isfinite(v)) throw ParameterError("solve_spd: non-finite rhs");
  }

  double amax = 0.0;
  for (double v : a.data) amax = std::max(amax, std::abs(v));
  const double sym_tol = 1e-10 * std::max(1.0, amax);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trace += a.at(i, i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a.at(i, j) - a.at(j, i)) > sym_tol) {
        throw ParameterError("solve_spd: matrix is not symmetric");
      }
    }
  }

  Matrix l = a;
  std::ptrdiff_t pivot = cholesky(l);
  if (pivot >= 0) {
    l = a;
    const double ridge = 1e-9 * trace / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) l.at(i, i) += ridge;
    pivot = cholesky(l);
    if (pivot >= 0) {
      throw NumericalError("solve_spd: matrix is not positive definite", pivot);
    }
  }

  std::vector<double> v = chol_solve(l, b);
  const double tol = 1e-8 * std::max(1.0, inf_norm(b));
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> r = residual(a, v, b);
    if (inf_norm(r) <= tol) return v;
    std::vector<double> e = chol_solve(l, r);
    for (std::size_t i = 0; i < n; ++i) v[i] -= e[i];
  }
  if (inf_norm(residual(a, v, b)) > tol) {
    throw NumericalError("solve_spd: refinement failed to reach tolerance");
  }
  return v;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ParameterError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile: q outside [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (std::isnan(v)) throw ParameterError("quantile: NaN in input");
  }
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::ceil(q * static_cast<double>(sorted.size())) - 1.0;
  const std::size_t idx = pos <= 0.0 ? 0 : static_cast<std::size_t>(pos);
  return sorted[idx];
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ParameterError("softmax: empty input");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    std::vector<double> p = softmax(logits.row_span(i));
    std::copy(p.begin(), p.end(), out.row(i));
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ParameterError("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace sfd
