#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sfd/dataset.hpp"
#include "sfd/mlp.hpp"
#include "sfd/selectors.hpp"

namespace sfd {

double accuracy(const MlpModel& model, const LabeledDataset& test);

// Mann-Whitney AUROC with average ranks for ties. Orientation: a high score
// should indicate a positive (here, a correct local prediction).
double auroc(std::span<const double> scores, const std::vector<bool>& is_positive);

// Shannon entropy in nats, 0 * ln 0 = 0.
double entropy(std::span<const double> p);

// Payload-byte model for a round of communication. Headers and compression
// are deliberately out of scope; numbers are auditable from these fields.
struct CommModel {
  std::size_t bytes_per_float = 8;
  std::size_t bytes_per_index = 4;
  std::size_t num_classes = 0;
  std::size_t param_count = 0;  // FedAvg only
};

struct RoundCommStats {
  std::vector<std::size_t> packets_per_client;
  std::size_t kept_records = 0;
  std::size_t num_clients = 0;
};

struct CommBytes {
  std::size_t upload = 0;
  std::size_t download = 0;
};

// Distillation methods: upload = sum over clients of packets * item bytes,
// download = kept_records * item bytes * K, where an item is an index plus a
// payload (index bytes for hard, C floats for soft). FedAvg: param_count
// floats per client in each direction. Indep: zero.
std::size_t item_bytes(const CommModel& model, KnowledgeMode mode);
CommBytes comm_bytes_round(const RoundCommStats& stats, KnowledgeMode mode,
                           const CommModel& model, Method method);

// sqrt((2 a^2 / m_k + 2 (1-a)^2 / m_proxy) * ln(2/delta)).
double hoeffding_term(double alpha, std::size_t m_k, std::size_t m_proxy,
                      double delta);

// Computable diagnostic terms of the generalization decomposition, evaluated
// on the round's kept ensemble records against hidden proxy truth.
struct BoundDiagnostics {
  double p1 = 0.0;  // fraction of kept records whose hard label misses truth
  double p2 = 1.0;
  double misleading_term = 0.0;  // mean l1 to the truth one-hot, mismatches
  double ambiguous_term = 0.0;   // mean l1 to own one-hot, matches
  double hoeffding_term = 0.0;
};

// Considers only records with kept set; l1 distances use the closed forms
// 2*(1 - mean[truth]) and 2*(1 - max mean), exact for probability vectors.
BoundDiagnostics bound_diagnostics(const std::vector<EnsembleRecord>& records,
                                   const std::vector<int>& proxy_truth);

}  // namespace sfd
