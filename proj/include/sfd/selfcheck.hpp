#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sfd {

// Injection points for fault testing the check suite itself. Defaults are
// the real library functions.
struct SelfCheckHooks {
  std::function<double(std::span<const double>, double)> quantile_fn;
};

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;  // set on failure
};

// Fits a ratio estimator for local = U[0, 0.5] against background = U[0, 1]
// with n points each and scores it on a 0..1 grid against the exact ratio
// 2 * 1{x <= 0.5}. grid_mae excludes the band [0.45, 0.55] around the jump;
// tail_mean is the mean estimated ratio on [0.6, 1.0], where the truth is 0.
struct Kulsif1dResult {
  double grid_mae = 0.0;
  double tail_mean = 0.0;
};
Kulsif1dResult kulsif_1d_oracle(std::size_t n, double sigma, double beta,
                                std::uint64_t seed);

// Worst per-parameter relative error between the backprop gradient and a
// central finite difference on a small model. Shared by the gradient check
// and the acceptance gate.
double gradient_max_rel_error(bool soft_targets, std::uint64_t seed);

// The built-in oracle suite behind the `verify` subcommand:
//   kulsif-1d            density-ratio fit vs a closed-form 1-D truth
//   selector-calibration quantile threshold semantics at tau = 0
//   rule-equivalence     l1 vs confidence server rules on random vectors
//   gradient-check       backprop vs central finite differences
std::vector<CheckResult> run_self_checks(const SelfCheckHooks& hooks = {});

}  // namespace sfd
