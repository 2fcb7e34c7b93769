#include "sfd/kulsif.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfd/error.hpp"

namespace sfd {

BoundingBox bounding_box(const Matrix& points, double margin) {
  if (points.rows == 0) throw ParameterError("bounding_box: empty point set");
  if (margin < 0.0) throw ParameterError("bounding_box: negative margin");
  const std::size_t d = points.cols;
  BoundingBox box;
  box.lo.assign(d, 0.0);
  box.hi.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double lo = points.at(0, j);
    double hi = lo;
    for (std::size_t i = 1; i < points.rows; ++i) {
      lo = std::min(lo, points.at(i, j));
      hi = std::max(hi, points.at(i, j));
    }
    const double width = hi - lo;
    if (width == 0.0) {
      const double center = lo;
      const double pad = margin * (1.0 + std::abs(center));
      box.lo[j] = center - pad;
      box.hi[j] = center + pad;
    } else {
      box.lo[j] = lo - margin * width;
      box.hi[j] = hi + margin * width;
    }
  }
  return box;
}

RatioEstimator fit_kulsif(const Matrix& local, const Matrix& background,
                          double sigma, double beta) {
  if (local.rows == 0 || background.rows == 0) {
    throw ParameterError("fit_kulsif: empty sample set");
  }
  if (local.cols != background.cols) {
    throw ShapeError("fit_kulsif: dimension mismatch");
  }
  if (!(sigma > 0.0) || !(beta > 0.0)) {
    throw ParameterError("fit_kulsif: sigma and beta must be positive");
  }
  const std::size_t n_u = background.rows;
  const std::size_t n_k = local.rows;

  Matrix a = gaussian_gram(background, background, sigma);
  const double inv_nu = 1.0 / static_cast<double>(n_u);
  for (double& v : a.data) v *= inv_nu;
  for (std::size_t i = 0; i < n_u; ++i) a.at(i, i) += beta;

  const Matrix k_uk = gaussian_gram(background, local, sigma);
  std::vector<double> rhs(n_u, 0.0);
  const double inv_nk = 1.0 / static_cast<double>(n_k);
  for (std::size_t i = 0; i < n_u; ++i) {
    double s = 0.0;
    const double* row = k_uk.row(i);
    for (std::size_t j = 0; j < n_k; ++j) s += row[j];
    rhs[i] = s * inv_nk;
  }

  std::vector<double> v;
  try {
    v = solve_spd(a, rhs);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) +
                             " (density-ratio system; try a larger beta)",
                         e.pivot_index);
  }

  // The solver promises this bound; re-check at fit time since every
  // downstream selection decision rests on it.
  double rhs_max = 0.0;
  for (double x : rhs) rhs_max = std::max(rhs_max, std::abs(x));
  double res_max = 0.0;
  for (std::size_t i = 0; i < n_u; ++i) {
    double s = 0.0;
    const double* ai = a.row(i);
    for (std::size_t j = 0; j < n_u; ++j) s += ai[j] * v[j];
    res_max = std::max(res_max, std::abs(s - rhs[i]));
  }
  if (res_max > 1e-8 * std::max(1.0, rhs_max)) {
    throw NumericalError(
        "fit_kulsif: stationarity residual out of tolerance; try a larger beta");
  }

  RatioEstimator est;
  est.sigma = sigma;
  est.beta = beta;
  est.background = background;
  est.local = local;
  est.dual_a.resize(n_u);
  const double scale = -1.0 / (beta * static_cast<double>(n_u));
  for (std::size_t i = 0; i < n_u; ++i) est.dual_a[i] = scale * v[i];
  est.dual_b = 1.0 / (beta * static_cast<double>(n_k));
  return est;
}

Matrix sample_background(const Matrix& points_for_box, double margin,
                         std::size_t n_u, RngStream rng) {
  if (n_u < 1) throw ParameterError("sample_background: n_u must be >= 1");
  const BoundingBox box = bounding_box(points_for_box, margin);
  const std::size_t d = points_for_box.cols;
  Matrix out(n_u, d);
  for (std::size_t i = 0; i < n_u; ++i) {
    double* row = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = box.lo[j] + rng.next_double() * (box.hi[j] - box.lo[j]);
    }
  }
  return out;
}

std::vector<double> estimate_ratio_raw(const RatioEstimator& est,
                                       const Matrix& x) {
  if (x.cols != est.local.cols) {
    throw ShapeError("estimate_ratio: dimension mismatch");
  }
  const Matrix k_xu = gaussian_gram(x, est.background, est.sigma);
  const Matrix k_xk = gaussian_gram(x, est.local, est.sigma);
  std::vector<double> w(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double s = 0.0;
    const double* ku = k_xu.row(i);
    for (std::size_t j = 0; j < est.background.rows; ++j) {
      s += ku[j] * est.dual_a[j];
    }
    double t = 0.0;
    const double* kk = k_xk.row(i);
    for (std::size_t j = 0; j < est.local.rows; ++j) t += kk[j];
    w[i] = s + est.dual_b * t;
  }
  return w;
}

std::vector<double> estimate_ratio(const RatioEstimator& est, const Matrix& x) {
  std::vector<double> w = estimate_ratio_raw(est, x);
  for (double& v : w) v = std::max(0.0, v);
  return w;
}

double calibrate(RatioEstimator& est, const Matrix& validation,
                 double tau_client) {
  if (validation.rows == 0) throw ParameterError("calibrate: empty validation set");
  if (!(tau_client >= 0.0 && tau_client <= 1.0)) {
    throw ParameterError("calibrate: tau_client must lie in [0, 1]");
  }
  const std::vector<double> ratios = estimate_ratio(est, validation);
  const double threshold = quantile(ratios, tau_client);
  est.threshold = threshold;
  return threshold;
}

double median_bandwidth(const Matrix& x, RngStream rng) {
  if (x.rows < 2) throw ParameterError("median_bandwidth: need >= 2 rows");
  const std::size_t take = std::min<std::size_t>(x.rows, 500);
  std::vector<std::uint32_t> rows = rng.pick(static_cast<std::uint32_t>(x.rows),
                                             static_cast<std::uint32_t>(take));
  std::sort(rows.begin(), rows.end());

  std::vector<double> dists;
  dists.reserve(take * (take - 1) / 2);
  for (std::size_t i = 0; i < take; ++i) {
    const double* xi = x.row(rows[i]);
    for (std::size_t j = i + 1; j < take; ++j) {
      const double* xj = x.row(rows[j]);
      double s = 0.0;
      for (std::size_t d = 0; d < x.cols; ++d) {
        const double t = xi[d] - xj[d];
        s += t * t;
      }
      dists.push_back(std::sqrt(s));
    }
  }
  const double med = quantile(dists, 0.5);
  if (med > 0.0) return med;

  double sum = 0.0;
  std::size_t count = 0;
  for (double d : dists) {
    if (d > 0.0) {
      sum += d;
      ++count;
    }
  }
  if (count == 0) {
    throw ParameterError("median_bandwidth: all points identical");
  }
  return sum / static_cast<double>(count);
}

}  // namespace sfd
