#include "sfd/selfcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sfd/kulsif.hpp"
#include "sfd/matrix.hpp"
#include "sfd/mlp.hpp"
#include "sfd/rng.hpp"

namespace sfd {
namespace {

Matrix uniform_column(std::size_t n, double scale, RngStream& rng) {
  Matrix m(n, 1);
  for (std::size_t i = 0; i < n; ++i) m.at(i, 0) = scale * rng.next_double();
  return m;
}

CheckResult check_kulsif_1d() {
  CheckResult res{"kulsif-1d", false, ""};
  const Kulsif1dResult r = kulsif_1d_oracle(500, 0.1, 1e-3, 20240813);
  if (r.grid_mae > 0.3) {
    res.detail = "grid MAE " + std::to_string(r.grid_mae) + " > 0.3";
    return res;
  }
  if (r.tail_mean > 0.2) {
    res.detail = "mean ratio on [0.6,1.0] " + std::to_string(r.tail_mean) +
                 " > 0.2";
    return res;
  }
  res.ok = true;
  return res;
}

CheckResult check_selector_calibration(const SelfCheckHooks& hooks) {
  CheckResult res{"selector-calibration", false, ""};
  auto qfn = hooks.quantile_fn
                 ? hooks.quantile_fn
                 : [](std::span<const double> v, double q) {
                     return quantile(v, q);
                   };

  RngStream rng(41);
  Matrix local(30, 2);
  for (double& v : local.data) v = rng.next_normal();
  Matrix validation(20, 2);
  for (double& v : validation.data) v = rng.next_normal();
  const double sigma = median_bandwidth(local, rng.child("sigma"));
  const Matrix background =
      sample_background(local, 0.05, local.rows, rng.child("background"));
  const RatioEstimator est = fit_kulsif(local, background, sigma, 1e-3);
  const std::vector<double> ratios = estimate_ratio(est, validation);

  // tau_client = 0 must make the threshold the minimum ratio, so that every
  // validation point passes its own selector.
  const double threshold = qfn(ratios, 0.0);
  const double min_ratio = *std::min_element(ratios.begin(), ratios.end());
  if (threshold != min_ratio) {
    res.detail = "threshold at tau=0 is " + std::to_string(threshold) +
                 ", expected the minimum ratio " + std::to_string(min_ratio);
    return res;
  }
  for (double r : ratios) {
    if (r < threshold) {
      res.detail = "validation ratio below its own tau=0 threshold";
      return res;
    }
  }
  res.ok = true;
  return res;
}

CheckResult check_rule_equivalence() {
  CheckResult res{"rule-equivalence", false, ""};
  RngStream rng(97);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t C = 2 + rng.next_below(9);
    std::vector<double> logits(C);
    for (double& v : logits) v = 2.0 * rng.next_normal();
    const std::vector<double> p = softmax(logits);
    double max_p = p[0];
    for (double v : p) max_p = std::max(max_p, v);
    double tau = 2.0 * rng.next_double();
    if (tau == 0.0) tau = 1.0;
    const bool keep_l1 = 2.0 * (1.0 - max_p) <= tau;
    const bool keep_conf = max_p >= 1.0 - tau / 2.0;
    if (keep_l1 != keep_conf) {
      res.detail = "rules disagree at case " + std::to_string(i) + " (max=" +
                   std::to_string(max_p) + ", tau=" + std::to_string(tau) + ")";
      return res;
    }
  }
  res.ok = true;
  return res;
}

CheckResult check_gradient() {
  CheckResult res{"gradient-check", false, ""};
  const double hard_err = gradient_max_rel_error(false, 5);
  const double soft_err = gradient_max_rel_error(true, 6);
  const double worst = std::max(hard_err, soft_err);
  if (worst > 1e-4) {
    res.detail = "max relative error " + std::to_string(worst) + " > 1e-4";
    return res;
  }
  res.ok = true;
  return res;
}

}  // namespace

Kulsif1dResult kulsif_1d_oracle(std::size_t n, double sigma, double beta,
                                std::uint64_t seed) {
  RngStream rng(seed);
  RngStream local_rng = rng.child("local");
  RngStream bg_rng = rng.child("background");
  const Matrix local = uniform_column(n, 0.5, local_rng);
  const Matrix background = uniform_column(n, 1.0, bg_rng);
  const RatioEstimator est = fit_kulsif(local, background, sigma, beta);

  Matrix grid(101, 1);
  for (int i = 0; i <= 100; ++i) grid.at(i, 0) = i / 100.0;
  const std::vector<double> ratio = estimate_ratio(est, grid);

  // Truth is 2 * 1{x <= 0.5}; the band around the jump is excluded.
  double err_sum = 0.0;
  std::size_t err_count = 0;
  double tail_sum = 0.0;
  std::size_t tail_count = 0;
  for (int i = 0; i <= 100; ++i) {
    const double x = grid.at(i, 0);
    if (x < 0.45 - 1e-12 || x > 0.55 + 1e-12) {
      const double truth = x <= 0.5 ? 2.0 : 0.0;
      err_sum += std::abs(ratio[i] - truth);
      ++err_count;
    }
    if (x >= 0.6 - 1e-12) {
      tail_sum += ratio[i];
      ++tail_count;
    }
  }
  return {err_sum / static_cast<double>(err_count),
          tail_sum / static_cast<double>(tail_count)};
}

double gradient_max_rel_error(bool soft_targets, std::uint64_t seed) {
  const std::vector<std::size_t> dims = {3, 5, 4};
  const std::size_t n = 8;
  RngStream rng(seed);
  MlpModel model = init_mlp(dims, rng.child("init"));

  RngStream data_rng = rng.child("data");
  Matrix x(n, dims.front());
  for (double& v : x.data) v = data_rng.next_normal();
  Matrix t(n, dims.back());
  if (soft_targets) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(dims.back());
      for (double& v : logits) v = data_rng.next_normal();
      const std::vector<double> p = softmax(logits);
      std::copy(p.begin(), p.end(), t.row(i));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      t.at(i, data_rng.next_below(dims.back())) = 1.0;
    }
  }

  // Analytic gradient recovered from one unit-rate step on a copy.
  MlpModel stepped = model;
  sgd_step(stepped, x, t, 1.0);

  const double eps = 1e-5;
  double worst = 0.0;
  auto probe = [&](double* param, double analytic) {
    const double saved = *param;
    *param = saved + eps;
    const double up = ce_loss(model, x, t);
    *param = saved - eps;
    const double down = ce_loss(model, x, t);
    *param = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (std::size_t i = 0; i < model.weights[l].data.size(); ++i) {
      probe(&model.weights[l].data[i],
            model.weights[l].data[i] - stepped.weights[l].data[i]);
    }
    for (std::size_t j = 0; j < model.biases[l].size(); ++j) {
      probe(&model.biases[l][j], model.biases[l][j] - stepped.biases[l][j]);
    }
  }
  return worst;
}

std::vector<CheckResult> run_self_checks(const SelfCheckHooks& hooks) {
  std::vector<CheckResult> out;
  out.push_back(check_kulsif_1d());
  out.push_back(check_selector_calibration(hooks));
  out.push_back(check_rule_equivalence());
  out.push_back(check_gradient());
  return out;
}

}  // namespace sfd
