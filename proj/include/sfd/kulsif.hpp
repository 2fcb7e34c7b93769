#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "sfd/matrix.hpp"
#include "sfd/rng.hpp"

namespace sfd {

// Axis-aligned box around a point set, each side widened by a margin
// fraction of the side's width. Zero-width dimensions are widened to
// +/- margin * (1 + |center|).
struct BoundingBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

BoundingBox bounding_box(const Matrix& points, double margin);

// Fitted kernelized least-squares density-ratio model w(x) ~ p_local(x)/u(x),
// where u is uniform over a compact box. The dual solution places coefficient
// dual_a[i] on background point i and the uniform coefficient dual_b on every
// local point.
struct RatioEstimator {
  double sigma = 0.0;
  double beta = 0.0;
  Matrix background;  // S_u, n_u x d
  Matrix local;       // S_k, n_k x d
  std::vector<double> dual_a;
  double dual_b = 0.0;
  std::optional<double> threshold;  // set by calibrate
};

// Solves the stationarity system of the regularized least-squares ratio
// objective: with K_uu = gram(S_u,S_u) and K_uk = gram(S_u,S_k),
//   (K_uu/n_u + beta*I) v = K_uk * 1/n_k,
//   dual_a = -v/(beta*n_u),  dual_b = 1/(beta*n_k).
// The solve residual bound is re-checked here; failure suggests a larger beta.
RatioEstimator fit_kulsif(const Matrix& local, const Matrix& background,
                          double sigma, double beta);

// Uniform draws from the margin-widened bounding box of points_for_box.
Matrix sample_background(const Matrix& points_for_box, double margin,
                         std::size_t n_u, RngStream rng);

// Ratio values clamped at zero (the population ratio is nonnegative; the
// unconstrained solution can dip below).
std::vector<double> estimate_ratio(const RatioEstimator& est, const Matrix& x);
// Unclamped values, for diagnostics.
std::vector<double> estimate_ratio_raw(const RatioEstimator& est,
                                       const Matrix& x);

// threshold = quantile(clamped ratios on validation, tau_client); stored in
// the estimator and returned.
double calibrate(RatioEstimator& est, const Matrix& validation,
                 double tau_client);

// Median pairwise distance over at most 500 subsampled rows; falls back to
// the mean positive distance when the median is zero.
double median_bandwidth(const Matrix& x, RngStream rng);

}  // namespace sfd
