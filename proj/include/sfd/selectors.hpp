#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "sfd/kulsif.hpp"
#include "sfd/matrix.hpp"

namespace sfd {

enum class KnowledgeMode { Hard, Soft };
enum class ClientStrategy { DensityRatio, Confidence, None };
enum class Method { Selective, NoSelector, Indep, FedAvg };

// One client's prediction on one proxy sample. sample_index is the proxy
// row id; the payload is a class id (hard) or a probability vector (soft).
struct KnowledgePacket {
  std::size_t sample_index = 0;
  int client_id = 0;
  std::variant<int, std::vector<double>> payload;
};

// The server's aggregate for one proxy sample. l1_ambiguity is
// ||mean_prediction - onehot(argmax mean_prediction)||_1, which for a
// probability vector equals 2 * (1 - max entry); the closed form is used so
// the l1 rule and the confidence rule coincide exactly.
struct EnsembleRecord {
  std::size_t sample_index = 0;
  std::vector<double> mean_prediction;
  int contributor_count = 0;
  bool kept = false;
  double l1_ambiguity = 0.0;
};

struct SelectorConfig {
  ClientStrategy client_strategy = ClientStrategy::DensityRatio;
  double tau_client = 0.25;
  double confidence_cutoff = 0.5;
  double tau_server = 1.0;
};

// l1-ambiguity of a probability vector: 2 * (1 - max entry).
double l1_ambiguity(const std::vector<double>& prob);

std::vector<double> one_hot(std::size_t num_classes, std::size_t cls);

// Misleading-knowledge filter. Keep rules per strategy:
//   DensityRatio: max over estimators of (clamped ratio - threshold) >= 0
//                 (a sample passes if any estimator claims it in-distribution)
//   Confidence:   max predicted probability >= confidence_cutoff
//   None:         keep all
// candidate_ids are proxy row ids in ascending order; local_probs holds the
// client's soft prediction per candidate. precomputed_ratios, when given,
// supplies per-estimator clamped ratios per candidate and skips kernel
// evaluation. Packets come back in ascending sample_index order.
std::vector<KnowledgePacket> client_filter(
    const std::vector<RatioEstimator>& estimators, const Matrix& candidates,
    const std::vector<std::size_t>& candidate_ids, const Matrix& local_probs,
    int client_id, KnowledgeMode mode, const SelectorConfig& config,
    const std::vector<std::vector<double>>* precomputed_ratios = nullptr);

// Per-candidate density-ratio selector score: max over estimators of
// (clamped ratio - threshold). The keep rule is score >= 0.
std::vector<double> density_scores(
    const std::vector<RatioEstimator>& estimators, const Matrix& candidates,
    const std::vector<std::vector<double>>* precomputed_ratios = nullptr);

// Groups packets by sample_index and averages contributors in ascending
// client_id order (fixed summation order). Hard payloads are promoted to
// one-hot vectors. Mixing hard and soft payloads in one round is a protocol
// error. kept is left false; l1_ambiguity is filled in.
std::vector<EnsembleRecord> server_aggregate(
    const std::vector<KnowledgePacket>& packets, std::size_t num_classes);

// Ambiguous-knowledge filter: kept iff l1_ambiguity <= tau_server,
// equivalently max(mean_prediction) >= 1 - tau_server/2.
void server_filter(std::vector<EnsembleRecord>& records, double tau_server);

struct DistillTargets {
  std::vector<std::size_t> sample_indices;  // ascending
  Matrix targets;  // one row per kept record
  bool empty() const { return sample_indices.empty(); }
};

// Kept records only. Soft mode passes mean predictions through; hard mode
// collapses each to onehot(argmax). An empty kept set means no distillation
// this round, which is a signal, not an error.
DistillTargets distill_targets(const std::vector<EnsembleRecord>& records,
                               KnowledgeMode mode);

}  // namespace sfd
