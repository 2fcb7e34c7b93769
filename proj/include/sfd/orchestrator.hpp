#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sfd/dataset.hpp"
#include "sfd/kulsif.hpp"
#include "sfd/metrics.hpp"
#include "sfd/mlp.hpp"
#include "sfd/selectors.hpp"

namespace sfd {

enum class DatasetKind { Synth, Idx };

struct SynthSpec {
  int classes = 4;
  std::size_t dim = 2;
  std::size_t train_per_class = 400;
  std::size_t test_per_class = 250;
  double separation = 6.0;
  double noise = 0.8;
};

struct IdxSpec {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t per_class_limit = 0;  // 0 = use every row
};

struct KulsifConfig {
  double beta = 1e-3;
  double sigma = 0.0;  // 0 = per-client median heuristic
  double margin = 0.05;
};

struct ExperimentConfig {
  Method method = Method::Selective;
  KnowledgeMode mode = KnowledgeMode::Hard;
  DatasetKind dataset = DatasetKind::Synth;
  SynthSpec synth;
  IdxSpec idx;
  PartitionSpec partition;
  TrainConfig train;
  SelectorConfig selector;
  KulsifConfig kulsif;
  bool weighted = false;  // single-batch alpha-weighted loss instead of interleaving
  int rounds = 60;
  std::uint64_t seed = 1;
  // Hidden-layer shapes rotate over clients (heterogeneous federation).
  std::vector<std::vector<std::size_t>> hidden_rotation = {
      {32}, {64}, {32, 32}, {64, 32}};
  // FedAvg overrides every client to this shared shape.
  std::vector<std::size_t> fedavg_hidden = {64};
  bool fedavg_size_weighted = false;

  void validate() const;
};

struct ClientState {
  int client_id;
  MlpModel model;
  LabeledDataset train;
  LabeledDataset validation;
  std::vector<int> estimator_classes;  // ascending; parallel to estimators
  std::vector<RatioEstimator> estimators;
  // Clamped ratios over the full proxy pool, one vector per estimator.
  // Features and estimators never change after setup, so this is static.
  std::vector<std::vector<double>> proxy_ratios;
  RngStream rng;  // identity stream; per-phase children derived from it
};

struct Federation {
  FederationData data;
  std::vector<ClientState> clients;
};

struct RoundLog {
  int round = 0;
  std::vector<double> test_acc;  // per client
  double mean_acc = 0.0;
  std::vector<double> local_loss;    // NaN when no such step ran
  std::vector<double> distill_loss;  // NaN when no distillation happened
  // Fraction of this round's candidates surviving each client's filter.
  std::vector<double> client_kept_fraction;
  // Fraction of candidates reaching the server from at least one client.
  double p_proxy_client = 0.0;
  // Fraction of aggregated records surviving the server filter.
  double p_proxy_server = 0.0;
  std::vector<std::size_t> upload_bytes_per_client;
  std::vector<std::size_t> download_bytes_per_client;
  std::size_t upload_bytes = 0;
  std::size_t download_bytes = 0;
  std::size_t candidate_count = 0;
  std::size_t aggregated_records = 0;
  std::size_t kept_records = 0;
  BoundDiagnostics diag;
};

// Per-round view handed to an observer: the log plus the aggregated records
// (kept flags set) and the candidate ids. Records are empty for methods
// without a distillation exchange.
struct RoundObservation {
  const RoundLog& log;
  const std::vector<EnsembleRecord>& records;
  const std::vector<std::size_t>& candidate_ids;
  const Federation& federation;
};
using RoundObserver = std::function<void(const RoundObservation&)>;

// Resolved filter settings for a method: NoSelector forces strategy None and
// tau_server = 2 through the same round code path as Selective.
SelectorConfig effective_selector(const ExperimentConfig& config);

// Partitions data, initializes per-client models from client-keyed rng
// substreams, and (for density-ratio selection) fits one estimator per class
// a client holds, calibrated at tau_client on that class's validation rows.
Federation setup(const ExperimentConfig& config);

void pretrain(Federation& fed, const ExperimentConfig& config);

// Accuracy-only log (the T=0 row and the post-pretrain baseline).
RoundLog evaluate_clients(Federation& fed, const ExperimentConfig& config,
                          int round_index);

// One distillation round: candidate draw, client predict + filter, server
// aggregate + filter, broadcast, local and distill SGD, evaluation.
RoundLog run_round(Federation& fed, const ExperimentConfig& config,
                   int round_index,
                   std::vector<EnsembleRecord>* records_out = nullptr,
                   std::vector<std::size_t>* candidates_out = nullptr);

// Local-only round (IndepLearn).
RoundLog run_indep_round(Federation& fed, const ExperimentConfig& config,
                         int round_index);

// s_local + s_distill local steps, then parameter averaging and broadcast.
RoundLog run_fedavg_round(Federation& fed, const ExperimentConfig& config,
                          int round_index);

// setup -> pretrain -> T rounds of the method's round op. T=0 produces the
// single post-pretrain evaluation log. The observer fires after every log.
std::vector<RoundLog> run_experiment(const ExperimentConfig& config,
                                     const RoundObserver& observer = {});

// Stacks b's rows below a's.
Matrix vstack(const Matrix& a, const Matrix& b);

}  // namespace sfd
