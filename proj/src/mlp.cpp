#include "sfd/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sfd/error.hpp"

namespace sfd {
namespace {

constexpr double kLogFloor = 1e-12;

struct ForwardCache {
  std::vector<Matrix> activations;  // activations[0] = input, last = probs
  Matrix logits;
};

ForwardCache forward_cached(const MlpModel& model, const Matrix& x) {
  if (x.cols != model.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols) +
                     " columns, model expects " +
                     std::to_string(model.input_dim()));
  }
  ForwardCache cache;
  cache.activations.reserve(model.weights.size() + 1);
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Matrix z = matmul(cache.activations.back(), model.weights[l]);
    for (std::size_t i = 0; i < z.rows; ++i) {
      double* zi = z.row(i);
      for (std::size_t j = 0; j < z.cols; ++j) zi[j] += model.biases[l][j];
    }
    if (l + 1 == model.weights.size()) {
      cache.logits = z;
      cache.activations.push_back(softmax_rows(z));
    } else {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      cache.activations.push_back(std::move(z));
    }
  }
  return cache;
}

double cross_entropy(const Matrix& probs, const Matrix& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    const double* t = targets.row(i);
    for (std::size_t c = 0; c < probs.cols; ++c) {
      if (t[c] != 0.0) total -= t[c] * std::log(std::max(p[c], kLogFloor));
    }
  }
  return total / static_cast<double>(probs.rows);
}

void check_targets(const Matrix& x, const Matrix& targets, std::size_t C) {
  if (targets.rows != x.rows || targets.cols != C) {
    throw ShapeError("sgd_step: target shape mismatch");
  }
  if (x.rows == 0) throw ParameterError("sgd_step: empty minibatch");
  for (std::size_t i = 0; i < targets.rows; ++i) {
    const double* t = targets.row(i);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (t[c] < 0.0) throw ParameterError("sgd_step: negative target entry");
      sum += t[c];
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ParameterError("sgd_step: target row does not sum to 1");
    }
  }
}

struct Gradients {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;
};

Gradients zero_gradients(const MlpModel& model) {
  Gradients g;
  g.dw.reserve(model.weights.size());
  g.db.reserve(model.weights.size());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    g.dw.emplace_back(model.weights[l].rows, model.weights[l].cols);
    g.db.emplace_back(model.biases[l].size(), 0.0);
  }
  return g;
}

// Adds scale * dCE/dparams for the given batch into g. Returns the loss.
double accumulate_gradients(const MlpModel& model, const Matrix& x,
                            const Matrix& targets, double scale,
                            Gradients& g) {
  check_targets(x, targets, model.num_classes());
  const ForwardCache cache = forward_cached(model, x);
  const Matrix& probs = cache.activations.back();
  const double loss = cross_entropy(probs, targets);

  const double inv_n = 1.0 / static_cast<double>(x.rows);
  Matrix delta(probs.rows, probs.cols);  // dLoss/dLogits
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    const double* t = targets.row(i);
    double* d = delta.row(i);
    for (std::size_t c = 0; c < probs.cols; ++c) d[c] = (p[c] - t[c]) * inv_n;
  }

  for (std::size_t li = model.weights.size(); li > 0; --li) {
    const std::size_t l = li - 1;
    const Matrix& a_in = cache.activations[l];
    Matrix dw = matmul_tn(a_in, delta);
    for (std::size_t i = 0; i < dw.data.size(); ++i) {
      g.dw[l].data[i] += scale * dw.data[i];
    }
    for (std::size_t j = 0; j < delta.cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < delta.rows; ++i) s += delta.at(i, j);
      g.db[l][j] += scale * s;
    }
    if (l > 0) {
      Matrix prev = matmul_nt(delta, model.weights[l]);
      // rectifier gate: a_in is max(0, z), so a_in > 0 marks active units
      for (std::size_t i = 0; i < prev.data.size(); ++i) {
        if (a_in.data[i] <= 0.0) prev.data[i] = 0.0;
      }
      delta = std::move(prev);
    }
  }
  return loss;
}

void apply_update(MlpModel& model, const Gradients& g, double lr,
                  double loss) {
  if (!std::isfinite(loss)) throw NumericalError("sgd_step: non-finite loss");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (double v : g.dw[l].data) {
      if (!std::isfinite(v)) throw NumericalError("sgd_step: non-finite gradient");
    }
    for (double v : g.db[l]) {
      if (!std::isfinite(v)) throw NumericalError("sgd_step: non-finite gradient");
    }
  }
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (std::size_t i = 0; i < g.dw[l].data.size(); ++i) {
      model.weights[l].data[i] -= lr * g.dw[l].data[i];
    }
    for (std::size_t j = 0; j < g.db[l].size(); ++j) {
      model.biases[l][j] -= lr * g.db[l][j];
    }
  }
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("truncated checkpoint " + path);
  }
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

double read_f64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("truncated checkpoint " + path);
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    n += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
  }
  return n;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (local_batch < 1 || distill_batch < 1) {
    throw ParameterError("batch sizes must be >= 1");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("alpha must lie in [0, 1]");
  }
}

MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, RngStream rng) {
  if (layer_dims.size() < 2) throw ParameterError("init_mlp: need >= 2 layer dims");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ParameterError("init_mlp: layer dims must be positive");
  }
  MlpModel m;
  m.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Matrix w(fan_in, layer_dims[l + 1]);
    for (double& v : w.data) v = std_dev * rng.next_normal();
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(layer_dims[l + 1], 0.0);
  }
  return m;
}

Matrix forward(const MlpModel& model, const Matrix& x) {
  return forward_cached(model, x).activations.back();
}

double sgd_step(MlpModel& model, const Matrix& x, const Matrix& targets,
                double lr) {
  Gradients g = zero_gradients(model);
  const double loss = accumulate_gradients(model, x, targets, 1.0, g);
  apply_update(model, g, lr, loss);
  return loss;
}

double sgd_step_pair(MlpModel& model, const Matrix& x_local,
                     const Matrix& t_local, const Matrix& x_proxy,
                     const Matrix& t_proxy, double alpha, double lr,
                     double* local_loss_out, double* proxy_loss_out) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("sgd_step_pair: alpha must lie in [0, 1]");
  }
  Gradients g = zero_gradients(model);
  const double local_loss =
      accumulate_gradients(model, x_local, t_local, alpha, g);
  const double proxy_loss =
      accumulate_gradients(model, x_proxy, t_proxy, 1.0 - alpha, g);
  const double loss = alpha * local_loss + (1.0 - alpha) * proxy_loss;
  apply_update(model, g, lr, loss);
  if (local_loss_out != nullptr) *local_loss_out = local_loss;
  if (proxy_loss_out != nullptr) *proxy_loss_out = proxy_loss;
  return loss;
}

double ce_loss(const MlpModel& model, const Matrix& x, const Matrix& targets) {
  check_targets(x, targets, model.num_classes());
  return cross_entropy(forward(model, x), targets);
}

std::vector<int> predict_hard(const MlpModel& model, const Matrix& x) {
  const Matrix probs = forward(model, x);
  std::vector<int> labels(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    labels[i] = static_cast<int>(argmax(probs.row_span(i)));
  }
  return labels;
}

void save_checkpoint(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write("SFDM", 4);
  write_u32(out, 1);  // format version
  write_u32(out, static_cast<std::uint32_t>(model.layer_dims.size()));
  for (std::size_t d : model.layer_dims) {
    write_u32(out, static_cast<std::uint32_t>(d));
  }
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (double v : model.weights[l].data) write_f64(out, v);
    for (double v : model.biases[l]) write_f64(out, v);
  }
  if (!out) throw IoError("write failed for checkpoint " + path);
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4)) throw IoError("truncated checkpoint " + path);
  if (std::string(magic, 4) != "SFDM") {
    throw FormatError("bad checkpoint magic in " + path);
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != 1) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + " in " + path);
  }
  const std::uint32_t num_dims = read_u32(in, path);
  if (num_dims < 2) throw FormatError("bad layer count in " + path);
  std::vector<std::size_t> dims(num_dims);
  for (std::uint32_t i = 0; i < num_dims; ++i) dims[i] = read_u32(in, path);

  MlpModel m;
  m.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix w(dims[l], dims[l + 1]);
    for (double& v : w.data) v = read_f64(in, path);
    std::vector<double> b(dims[l + 1]);
    for (double& v : b) v = read_f64(in, path);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

}  // namespace sfd
