#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfd/matrix.hpp"
#include "sfd/rng.hpp"

namespace sfd {

struct LabeledDataset {
  Matrix features;          // n x d
  std::vector<int> labels;  // values in [0, num_classes)
  int num_classes = 0;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
};

enum class PartitionMode { StrongNonIID, WeakNonIID, Dirichlet, IID };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::StrongNonIID;
  double beta = 0.5;  // Dirichlet concentration
  int num_clients = 1;
  double proxy_fraction_per_class = 0.15;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
};

// Product of partitioning one labeled pool across a federation. proxy_truth
// is diagnostics-only: training code receives proxy_features and never this
// vector. The *_origin fields record each row's index in the source dataset
// so disjointness is checkable.
struct FederationData {
  std::vector<LabeledDataset> client_train;
  std::vector<LabeledDataset> client_validation;
  Matrix proxy_features;
  std::vector<int> proxy_truth;
  LabeledDataset test;  // supplied by the caller, not carved from the pool
  int num_classes = 0;

  std::vector<std::vector<std::size_t>> train_origin;
  std::vector<std::vector<std::size_t>> validation_origin;
  std::vector<std::size_t> proxy_origin;
};

// C well-separated Gaussian blobs: class c is centered at
// separation * (cos 2*pi*c/C, sin 2*pi*c/C, 0, ...) with isotropic noise.
LabeledDataset synth_gaussians(int num_classes, std::size_t dim,
                               std::size_t n_per_class, double separation,
                               double noise, RngStream rng);

// IDX-format reader (big-endian): images file magic 2051 with n, rows, cols
// then raw bytes scaled to [0,1]; labels file magic 2049 with n label bytes.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Keeps the first `limit` rows of each class, in file order.
LabeledDataset take_per_class(const LabeledDataset& data, std::size_t limit);

// Rows of `data` at the given origin indices, in the given order.
LabeledDataset subset(const LabeledDataset& data,
                      const std::vector<std::size_t>& indices);

// One Dirichlet(beta, ..., beta) draw over K coordinates. Computed in log
// space so tiny beta (sparse draws) does not underflow to 0/0.
std::vector<double> dirichlet_sample(double beta, std::size_t K,
                                     RngStream& rng);

// Splits `dataset` into per-client train/validation sets and an unlabeled
// proxy pool. Per class: proxy_fraction_per_class of the rows (rounded to
// nearest) moves to the proxy pool, the rest are assigned by mode, then
// validation_fraction of each client's rows per class moves to validation.
// Clients left without train or validation rows raise PartitionError.
FederationData partition(const LabeledDataset& dataset,
                         const PartitionSpec& spec);

}  // namespace sfd
