#include "sfd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

#include "sfd/error.hpp"

namespace sfd {
namespace {

std::vector<std::vector<std::size_t>> rows_by_class(
    const std::vector<int>& labels, int num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(i);
  }
  return by_class;
}

// Marsaglia-Tsang Gamma(a, 1) draw for a >= 1.
double gamma_ge1(double a, RngStream& rng) {
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.next_normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = rng.next_double();
    if (u == 0.0) continue;
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// log of a Gamma(a, 1) draw, valid for any a > 0. For a < 1 uses the boost
// Gamma(a) = Gamma(a+1) * U^(1/a), staying in logs so tiny a cannot
// underflow the result to zero.
double log_gamma_draw(double a, RngStream& rng) {
  if (a >= 1.0) return std::log(gamma_ge1(a, rng));
  double u = rng.next_double();
  while (u == 0.0) u = rng.next_double();
  return std::log(gamma_ge1(a + 1.0, rng)) + std::log(u) / a;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& buf,
                          std::size_t offset) {
  return (std::uint32_t(buf[offset]) << 24) |
         (std::uint32_t(buf[offset + 1]) << 16) |
         (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

std::vector<unsigned char> read_file(const std::string& path,
                                     std::size_t min_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < min_size) throw IoError("truncated file " + path);
  return buf;
}

}  // namespace

LabeledDataset synth_gaussians(int num_classes, std::size_t dim,
                               std::size_t n_per_class, double separation,
                               double noise, RngStream rng) {
  if (num_classes < 2) throw ParameterError("synth_gaussians: need >= 2 classes");
  if (dim < 2) throw ParameterError("synth_gaussians: need dim >= 2");
  if (n_per_class < 1) throw ParameterError("synth_gaussians: need n_per_class >= 1");
  if (!(separation > 0.0) || !(noise > 0.0)) {
    throw ParameterError("synth_gaussians: separation and noise must be positive");
  }

  const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
  LabeledDataset out;
  out.features = Matrix(n, dim);
  out.labels.resize(n);
  out.num_classes = num_classes;
  const double two_pi = 8.0 * std::atan(1.0);
  std::size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double angle = two_pi * c / num_classes;
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      double* f = out.features.row(row);
      f[0] = separation * std::cos(angle) + noise * rng.next_normal();
      f[1] = separation * std::sin(angle) + noise * rng.next_normal();
      for (std::size_t d = 2; d < dim; ++d) f[d] = noise * rng.next_normal();
      out.labels[row] = c;
    }
  }
  return out;
}

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const std::vector<unsigned char> img = read_file(images_path, 16);
  const std::uint32_t img_magic = read_u32_be(img, 0);
  if (img_magic != 2051) {
    throw FormatError("images file " + images_path + ": magic " +
                      std::to_string(img_magic) + ", expected 2051");
  }
  const std::size_t n = read_u32_be(img, 4);
  const std::size_t rows = read_u32_be(img, 8);
  const std::size_t cols = read_u32_be(img, 12);
  if (n == 0) throw FormatError("images file " + images_path + ": zero rows");
  if (img.size() < 16 + n * rows * cols) {
    throw IoError("truncated file " + images_path);
  }

  const std::vector<unsigned char> lab = read_file(labels_path, 8);
  const std::uint32_t lab_magic = read_u32_be(lab, 0);
  if (lab_magic != 2049) {
    throw FormatError("labels file " + labels_path + ": magic " +
                      std::to_string(lab_magic) + ", expected 2049");
  }
  const std::size_t n_labels = read_u32_be(lab, 4);
  if (n_labels != n) {
    throw FormatError("count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(n_labels) + " labels");
  }
  if (lab.size() < 8 + n) throw IoError("truncated file " + labels_path);

  LabeledDataset out;
  out.features = Matrix(n, rows * cols);
  out.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double* f = out.features.row(i);
    const unsigned char* src = img.data() + 16 + i * rows * cols;
    for (std::size_t p = 0; p < rows * cols; ++p) {
      f[p] = static_cast<double>(src[p]) / 255.0;
    }
    out.labels[i] = lab[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = max_label + 1;
  return out;
}

LabeledDataset take_per_class(const LabeledDataset& data, std::size_t limit) {
  if (limit < 1) throw ParameterError("take_per_class: limit must be >= 1");
  std::vector<std::size_t> seen(data.num_classes, 0);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (seen[data.labels[i]] < limit) {
      ++seen[data.labels[i]];
      keep.push_back(i);
    }
  }
  return subset(data, keep);
}

LabeledDataset subset(const LabeledDataset& data,
                      const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.features = Matrix(indices.size(), data.dim());
  out.labels.resize(indices.size());
  out.num_classes = data.num_classes;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = data.features.row(indices[i]);
    std::copy(src, src + data.dim(), out.features.row(i));
    out.labels[i] = data.labels[indices[i]];
  }
  return out;
}

std::vector<double> dirichlet_sample(double beta, std::size_t K,
                                     RngStream& rng) {
  if (!(beta > 0.0)) throw ParameterError("dirichlet_sample: beta must be positive");
  if (K < 1) throw ParameterError("dirichlet_sample: K must be >= 1");
  if (K == 1) return {1.0};

  std::vector<double> log_g(K);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    log_g[k] = log_gamma_draw(beta, rng);
    m = std::max(m, log_g[k]);
  }
  std::vector<double> p(K);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    p[k] = std::exp(log_g[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

FederationData partition(const LabeledDataset& dataset,
                         const PartitionSpec& spec) {
  const int C = dataset.num_classes;
  const int K = spec.num_clients;
  if (K < 1) throw ParameterError("partition: num_clients must be >= 1");
  if (spec.mode == PartitionMode::StrongNonIID && K > C) {
    throw ParameterError("partition: strong non-IID requires num_clients <= num_classes");
  }
  if (spec.mode == PartitionMode::WeakNonIID && C < 2) {
    throw ParameterError("partition: weak non-IID requires >= 2 classes");
  }
  if (!(spec.proxy_fraction_per_class > 0.0 && spec.proxy_fraction_per_class < 1.0)) {
    throw ParameterError("partition: proxy_fraction_per_class must be in (0,1)");
  }
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
    throw ParameterError("partition: validation_fraction must be in (0,1)");
  }
  if (spec.mode == PartitionMode::Dirichlet && !(spec.beta > 0.0)) {
    throw ParameterError("partition: Dirichlet beta must be positive");
  }

  RngStream root(spec.seed);
  RngStream part_rng = root.child("partition");
  const auto by_class = rows_by_class(dataset.labels, C);

  // Stage 1: stratified proxy pool, rounded to nearest per class.
  std::vector<std::size_t> proxy_origin;
  std::vector<std::vector<std::size_t>> remaining(C);
  for (int c = 0; c < C; ++c) {
    const auto& rows = by_class[c];
    const std::size_t n_c = rows.size();
    std::size_t take = static_cast<std::size_t>(
        std::llround(spec.proxy_fraction_per_class * static_cast<double>(n_c)));
    take = std::min(take, n_c);
    RngStream pick_rng = part_rng.child("proxy", static_cast<std::uint64_t>(c));
    std::vector<std::uint32_t> sel = pick_rng.pick(
        static_cast<std::uint32_t>(n_c), static_cast<std::uint32_t>(take));
    std::vector<bool> to_proxy(n_c, false);
    for (std::uint32_t s : sel) to_proxy[s] = true;
    for (std::size_t i = 0; i < n_c; ++i) {
      (to_proxy[i] ? proxy_origin : remaining[c]).push_back(rows[i]);
    }
  }
  std::sort(proxy_origin.begin(), proxy_origin.end());

  // Stage 2: assign the remaining rows to clients by mode.
  std::vector<std::vector<std::size_t>> client_rows(K);
  switch (spec.mode) {
    case PartitionMode::StrongNonIID: {
      for (int c = 0; c < C; ++c) {
        auto& dst = client_rows[c % K];
        dst.insert(dst.end(), remaining[c].begin(), remaining[c].end());
      }
      break;
    }
    case PartitionMode::WeakNonIID: {
      // Client k holds classes k mod C and (k+1) mod C; each class's rows
      // are split into equal contiguous chunks across its receiving clients.
      std::vector<std::vector<int>> receivers(C);
      for (int k = 0; k < K; ++k) {
        const int a = k % C;
        const int b = (k + 1) % C;
        receivers[a].push_back(k);
        if (b != a) receivers[b].push_back(k);
      }
      for (int c = 0; c < C; ++c) {
        if (remaining[c].empty()) continue;
        if (receivers[c].empty()) {
          throw PartitionError("class " + std::to_string(c) +
                               " has no receiving client under weak non-IID");
        }
        const std::size_t r = receivers[c].size();
        const std::size_t n_c = remaining[c].size();
        std::size_t offset = 0;
        for (std::size_t j = 0; j < r; ++j) {
          std::size_t chunk = n_c / r + (j < n_c % r ? 1 : 0);
          auto& dst = client_rows[receivers[c][j]];
          dst.insert(dst.end(), remaining[c].begin() + offset,
                     remaining[c].begin() + offset + chunk);
          offset += chunk;
        }
      }
      break;
    }
    case PartitionMode::IID: {
      RngStream assign_rng = part_rng.child("assign");
      for (int c = 0; c < C; ++c) {
        for (std::size_t row : remaining[c]) {
          client_rows[assign_rng.next_below(K)].push_back(row);
        }
      }
      break;
    }
    case PartitionMode::Dirichlet: {
      for (int c = 0; c < C; ++c) {
        RngStream assign_rng =
            part_rng.child("assign", static_cast<std::uint64_t>(c));
        const std::vector<double> p = dirichlet_sample(spec.beta, K, assign_rng);
        std::vector<double> cdf(K);
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
          acc += p[k];
          cdf[k] = acc;
        }
        for (std::size_t row : remaining[c]) {
          const double u = assign_rng.next_double();
          int k = 0;
          while (k + 1 < K && u >= cdf[k]) ++k;
          client_rows[k].push_back(row);
        }
      }
      break;
    }
  }

  // Stage 3: per-client validation split, stratified by class so every class
  // a client trains on also has calibration rows whenever it has >= 2 rows.
  FederationData out;
  out.num_classes = C;
  out.client_train.resize(K);
  out.client_validation.resize(K);
  out.train_origin.resize(K);
  out.validation_origin.resize(K);
  for (int k = 0; k < K; ++k) {
    if (client_rows[k].empty()) {
      throw PartitionError("client " + std::to_string(k) +
                           " has an empty train set");
    }
    std::vector<int> local_labels(client_rows[k].size());
    for (std::size_t i = 0; i < client_rows[k].size(); ++i) {
      local_labels[i] = dataset.labels[client_rows[k][i]];
    }
    const auto local_by_class = rows_by_class(local_labels, C);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    for (int c = 0; c < C; ++c) {
      const auto& rows = local_by_class[c];
      const std::size_t n_c = rows.size();
      if (n_c == 0) continue;
      std::size_t val_count = 0;
      if (n_c >= 2) {
        val_count = static_cast<std::size_t>(std::llround(
            spec.validation_fraction * static_cast<double>(n_c)));
        val_count = std::min(std::max<std::size_t>(val_count, 1), n_c - 1);
      }
      RngStream pick_rng = part_rng.child("validation", k).child(c);
      std::vector<std::uint32_t> sel = pick_rng.pick(
          static_cast<std::uint32_t>(n_c), static_cast<std::uint32_t>(val_count));
      std::vector<bool> to_val(n_c, false);
      for (std::uint32_t s : sel) to_val[s] = true;
      for (std::size_t i = 0; i < n_c; ++i) {
        (to_val[i] ? val_idx : train_idx).push_back(client_rows[k][rows[i]]);
      }
    }
    if (train_idx.empty()) {
      throw PartitionError("client " + std::to_string(k) +
                           " has an empty train set");
    }
    if (val_idx.empty()) {
      throw PartitionError("client " + std::to_string(k) +
                           " has an empty validation set");
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    out.client_train[k] = subset(dataset, train_idx);
    out.client_validation[k] = subset(dataset, val_idx);
    out.train_origin[k] = std::move(train_idx);
    out.validation_origin[k] = std::move(val_idx);
  }

  out.proxy_features = Matrix(proxy_origin.size(), dataset.dim());
  out.proxy_truth.resize(proxy_origin.size());
  for (std::size_t i = 0; i < proxy_origin.size(); ++i) {
    const double* src = dataset.features.row(proxy_origin[i]);
    std::copy(src, src + dataset.dim(), out.proxy_features.row(i));
    out.proxy_truth[i] = dataset.labels[proxy_origin[i]];
  }
  out.proxy_origin = std::move(proxy_origin);
  return out;
}

}  // namespace sfd
