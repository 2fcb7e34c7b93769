#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sfd/matrix.hpp"
#include "sfd/rng.hpp"

namespace sfd {

// Feed-forward classifier: rectifier hidden layers, softmax head.
// weights[l] has shape dims[l] x dims[l+1] (row-major, input-major).
struct MlpModel {
  std::vector<std::size_t> layer_dims;  // [d, h1, ..., C]
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }
  std::size_t param_count() const;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t pretrain_steps = 200;
  std::size_t s_local = 1;     // local SGD steps per round
  std::size_t s_distill = 10;  // distillation SGD steps per round
  std::size_t local_batch = 64;
  std::size_t distill_batch = 128;
  double alpha = 0.5;  // local-loss weight in single-batch weighted mode

  void validate() const;
};

// He-initialized weights (Normal with variance 2/fan_in), zero biases.
MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, RngStream rng);

// Per-row class probabilities.
Matrix forward(const MlpModel& model, const Matrix& x);

// One full-batch gradient step on the given minibatch against row-stochastic
// targets (one-hot rows are just a special soft target). Returns the
// cross-entropy loss computed before the update. Non-finite loss or gradient
// aborts with NumericalError before any parameter is touched.
double sgd_step(MlpModel& model, const Matrix& x, const Matrix& targets,
                double lr);

// Weighted-mode step: loss = alpha * CE(local) + (1 - alpha) * CE(proxy),
// one combined update. Returns the combined loss; the two parts are written
// to the out pointers when given.
double sgd_step_pair(MlpModel& model, const Matrix& x_local,
                     const Matrix& t_local, const Matrix& x_proxy,
                     const Matrix& t_proxy, double alpha, double lr,
                     double* local_loss_out = nullptr,
                     double* proxy_loss_out = nullptr);

// Argmax class per row, lowest index on ties.
std::vector<int> predict_hard(const MlpModel& model, const Matrix& x);

// Cross-entropy against targets without updating anything.
double ce_loss(const MlpModel& model, const Matrix& x, const Matrix& targets);

// Versioned binary checkpoint: "SFDM", format version, layer dims, then
// parameters in layer order (weights then biases), little-endian doubles.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace sfd
