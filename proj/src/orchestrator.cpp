#include "sfd/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfd/error.hpp"
#include "sfd/threading.hpp"

namespace sfd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Confidence level for the per-round numerical-constraint diagnostic.
constexpr double kDiagnosticsDelta = 0.05;

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& ids) {
  Matrix out(ids.size(), src.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* row = src.row(ids[i]);
    std::copy(row, row + src.cols, out.row(i));
  }
  return out;
}

std::vector<std::size_t> class_rows(const LabeledDataset& data, int cls) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == cls) rows.push_back(i);
  }
  return rows;
}

std::vector<std::vector<std::size_t>> model_dims(const ExperimentConfig& cfg,
                                                 std::size_t d, std::size_t C,
                                                 int K) {
  std::vector<std::vector<std::size_t>> dims(K);
  for (int k = 0; k < K; ++k) {
    const std::vector<std::size_t>& hidden =
        cfg.method == Method::FedAvg
            ? cfg.fedavg_hidden
            : cfg.hidden_rotation[k % cfg.hidden_rotation.size()];
    dims[k].push_back(d);
    dims[k].insert(dims[k].end(), hidden.begin(), hidden.end());
    dims[k].push_back(C);
  }
  return dims;
}

// `steps` SGD steps on minibatches drawn with replacement from the client's
// own data. Returns the mean step loss, NaN when steps == 0.
double local_steps(ClientState& cs, const TrainConfig& tc, RngStream rng,
                   std::size_t steps) {
  if (steps == 0) return kNaN;
  const std::size_t n = cs.train.size();
  const std::size_t C = cs.model.num_classes();
  double total = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<std::size_t> batch(tc.local_batch);
    for (std::size_t& b : batch) b = rng.next_below(n);
    Matrix x = gather_rows(cs.train.features, batch);
    Matrix t(batch.size(), C);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      t.at(i, cs.train.labels[batch[i]]) = 1.0;
    }
    total += sgd_step(cs.model, x, t, tc.learning_rate);
  }
  return total / static_cast<double>(steps);
}

// `steps` SGD steps on the broadcast distillation set. Batches are the whole
// set when it fits, otherwise a without-replacement draw per step.
double distill_steps(ClientState& cs, const TrainConfig& tc, RngStream rng,
                     const Matrix& feats, const Matrix& targets,
                     std::size_t steps) {
  if (steps == 0 || feats.rows == 0) return kNaN;
  double total = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    if (feats.rows <= tc.distill_batch) {
      total += sgd_step(cs.model, feats, targets, tc.learning_rate);
      continue;
    }
    std::vector<std::uint32_t> sel =
        rng.pick(static_cast<std::uint32_t>(feats.rows),
                 static_cast<std::uint32_t>(tc.distill_batch));
    std::sort(sel.begin(), sel.end());
    std::vector<std::size_t> batch(sel.begin(), sel.end());
    Matrix x = gather_rows(feats, batch);
    Matrix t = gather_rows(targets, batch);
    total += sgd_step(cs.model, x, t, tc.learning_rate);
  }
  return total / static_cast<double>(steps);
}

void evaluate_into(Federation& fed, RoundLog& log) {
  const std::size_t K = fed.clients.size();
  log.test_acc.assign(K, 0.0);
  parallel_for(K, [&](std::size_t k) {
    log.test_acc[k] = accuracy(fed.clients[k].model, fed.data.test);
  });
  double sum = 0.0;
  for (double a : log.test_acc) sum += a;
  log.mean_acc = sum / static_cast<double>(K);
}

std::size_t min_train_size(const Federation& fed) {
  std::size_t m = fed.clients[0].train.size();
  for (const ClientState& cs : fed.clients) m = std::min(m, cs.train.size());
  return m;
}

void fill_diagnostics(const Federation& fed, const ExperimentConfig& cfg,
                      const std::vector<EnsembleRecord>& records,
                      RoundLog& log) {
  log.diag = bound_diagnostics(records, fed.data.proxy_truth);
  log.diag.hoeffding_term =
      log.kept_records > 0
          ? hoeffding_term(cfg.train.alpha, min_train_size(fed),
                           log.kept_records, kDiagnosticsDelta)
          : kNaN;
}

RoundLog blank_log(const Federation& fed, int round_index) {
  RoundLog log;
  log.round = round_index;
  const std::size_t K = fed.clients.size();
  log.local_loss.assign(K, kNaN);
  log.distill_loss.assign(K, kNaN);
  log.client_kept_fraction.assign(K, 0.0);
  log.upload_bytes_per_client.assign(K, 0);
  log.download_bytes_per_client.assign(K, 0);
  log.diag.hoeffding_term = kNaN;
  return log;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (rounds < 0) throw ParameterError("rounds must be >= 0");
  if (partition.num_clients < 1) throw ParameterError("num_clients must be >= 1");
  train.validate();
  if (!(selector.tau_client >= 0.0 && selector.tau_client <= 1.0)) {
    throw ParameterError("tau_client must lie in [0, 1]");
  }
  if (!(selector.tau_server > 0.0 && selector.tau_server <= 2.0)) {
    throw ParameterError("tau_server must lie in (0, 2]");
  }
  if (!(selector.confidence_cutoff >= 0.0 && selector.confidence_cutoff <= 1.0)) {
    throw ParameterError("confidence_cutoff must lie in [0, 1]");
  }
  if (!(kulsif.beta > 0.0)) throw ParameterError("kulsif.beta must be positive");
  if (kulsif.sigma < 0.0) throw ParameterError("kulsif.sigma must be >= 0");
  if (kulsif.margin < 0.0) throw ParameterError("kulsif.margin must be >= 0");
  if (hidden_rotation.empty()) {
    throw ParameterError("hidden_rotation must not be empty");
  }
  if (dataset == DatasetKind::Idx) {
    if (idx.train_images.empty() || idx.train_labels.empty() ||
        idx.test_images.empty() || idx.test_labels.empty()) {
      throw ParameterError("idx dataset requires all four file paths");
    }
  }
}

SelectorConfig effective_selector(const ExperimentConfig& config) {
  SelectorConfig sel = config.selector;
  if (config.method == Method::NoSelector) {
    sel.client_strategy = ClientStrategy::None;
    sel.tau_server = 2.0;
  }
  return sel;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("vstack: column mismatch");
  Matrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

Federation setup(const ExperimentConfig& config) {
  config.validate();
  RngStream root(config.seed);

  LabeledDataset pool;
  LabeledDataset test;
  if (config.dataset == DatasetKind::Synth) {
    const SynthSpec& s = config.synth;
    pool = synth_gaussians(s.classes, s.dim, s.train_per_class, s.separation,
                           s.noise, root.child("data").child("train"));
    test = synth_gaussians(s.classes, s.dim, s.test_per_class, s.separation,
                           s.noise, root.child("data").child("test"));
  } else {
    pool = load_idx(config.idx.train_images, config.idx.train_labels);
    if (config.idx.per_class_limit > 0) {
      pool = take_per_class(pool, config.idx.per_class_limit);
    }
    test = load_idx(config.idx.test_images, config.idx.test_labels);
    const int C = std::max(pool.num_classes, test.num_classes);
    pool.num_classes = C;
    test.num_classes = C;
  }

  PartitionSpec pspec = config.partition;
  pspec.seed = config.seed;
  Federation fed;
  fed.data = partition(pool, pspec);
  fed.data.test = std::move(test);

  const int K = config.partition.num_clients;
  const std::size_t d = pool.dim();
  const std::size_t C = static_cast<std::size_t>(pool.num_classes);
  const auto dims = model_dims(config, d, C, K);
  for (int k = 0; k < K; ++k) {
    fed.clients.push_back(ClientState{
        k,
        init_mlp(dims[k], root.child("model", static_cast<std::uint64_t>(k))),
        fed.data.client_train[k],
        fed.data.client_validation[k],
        {},
        {},
        {},
        root.child("client", static_cast<std::uint64_t>(k))});
  }

  const SelectorConfig sel = effective_selector(config);
  const bool fit_estimators = config.method == Method::Selective &&
                              sel.client_strategy == ClientStrategy::DensityRatio;
  if (!fit_estimators) return fed;

  parallel_for(fed.clients.size(), [&](std::size_t k) {
    ClientState& cs = fed.clients[k];
    const Matrix box_points = vstack(cs.train.features, fed.data.proxy_features);
    const double sigma =
        config.kulsif.sigma > 0.0
            ? config.kulsif.sigma
            : median_bandwidth(box_points, root.child("sigma", k));
    for (int c = 0; c < fed.data.num_classes; ++c) {
      const std::vector<std::size_t> rows = class_rows(cs.train, c);
      if (rows.empty()) continue;
      const Matrix local = gather_rows(cs.train.features, rows);
      const Matrix background =
          sample_background(box_points, config.kulsif.margin, local.rows,
                            root.child("background", k).child(c));
      RatioEstimator est =
          fit_kulsif(local, background, sigma, config.kulsif.beta);
      std::vector<std::size_t> val_rows = class_rows(cs.validation, c);
      // A client holding a single row of a class has no validation row for
      // it; calibrate on the train rows then (threshold = that row's ratio
      // quantile, still a valid cutoff).
      const Matrix val = val_rows.empty()
                             ? local
                             : gather_rows(cs.validation.features, val_rows);
      calibrate(est, val, sel.tau_client);
      cs.proxy_ratios.push_back(estimate_ratio(est, fed.data.proxy_features));
      cs.estimator_classes.push_back(c);
      cs.estimators.push_back(std::move(est));
    }
  });
  return fed;
}

void pretrain(Federation& fed, const ExperimentConfig& config) {
  parallel_for(fed.clients.size(), [&](std::size_t k) {
    ClientState& cs = fed.clients[k];
    local_steps(cs, config.train, cs.rng.child("pretrain"),
                config.train.pretrain_steps);
  });
}

RoundLog evaluate_clients(Federation& fed, const ExperimentConfig& config,
                          int round_index) {
  (void)config;
  RoundLog log = blank_log(fed, round_index);
  evaluate_into(fed, log);
  return log;
}

RoundLog run_round(Federation& fed, const ExperimentConfig& config,
                   int round_index, std::vector<EnsembleRecord>* records_out,
                   std::vector<std::size_t>* candidates_out) {
  const SelectorConfig sel = effective_selector(config);
  const std::size_t K = fed.clients.size();
  const std::size_t C = static_cast<std::size_t>(fed.data.num_classes);
  RoundLog log = blank_log(fed, round_index);
  RngStream root(config.seed);

  // Phase 1: the server draws this round's candidate proxy subset.
  const std::size_t pool = fed.data.proxy_features.rows;
  const std::size_t want = std::min<std::size_t>(
      pool, config.train.s_distill * config.train.distill_batch);
  RngStream server_rng = root.child("server").child(
      "round", static_cast<std::uint64_t>(round_index));
  std::vector<std::uint32_t> drawn = server_rng.pick(
      static_cast<std::uint32_t>(pool), static_cast<std::uint32_t>(want));
  std::sort(drawn.begin(), drawn.end());
  std::vector<std::size_t> candidate_ids(drawn.begin(), drawn.end());
  const Matrix candidates = gather_rows(fed.data.proxy_features, candidate_ids);
  log.candidate_count = candidate_ids.size();

  // Phase 2: every client predicts on the candidates and filters.
  std::vector<std::vector<KnowledgePacket>> per_client_packets(K);
  parallel_for(K, [&](std::size_t k) {
    ClientState& cs = fed.clients[k];
    const Matrix probs = forward(cs.model, candidates);
    std::vector<std::vector<double>> sliced;
    const std::vector<std::vector<double>>* sliced_ptr = nullptr;
    if (sel.client_strategy == ClientStrategy::DensityRatio) {
      sliced.resize(cs.proxy_ratios.size());
      for (std::size_t e = 0; e < cs.proxy_ratios.size(); ++e) {
        sliced[e].resize(candidate_ids.size());
        for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
          sliced[e][i] = cs.proxy_ratios[e][candidate_ids[i]];
        }
      }
      sliced_ptr = &sliced;
    }
    per_client_packets[k] =
        client_filter(cs.estimators, candidates, candidate_ids, probs,
                      cs.client_id, config.mode, sel, sliced_ptr);
  });

  // Phase 3: server aggregation and ambiguity filtering (the round barrier).
  std::vector<KnowledgePacket> all_packets;
  for (std::size_t k = 0; k < K; ++k) {
    all_packets.insert(all_packets.end(), per_client_packets[k].begin(),
                       per_client_packets[k].end());
  }
  std::vector<EnsembleRecord> records = server_aggregate(all_packets, C);
  server_filter(records, sel.tau_server);
  log.aggregated_records = records.size();
  for (const EnsembleRecord& r : records) log.kept_records += r.kept ? 1 : 0;

  // Phase 4: broadcast distillation targets.
  const DistillTargets targets = distill_targets(records, config.mode);
  const Matrix distill_feats =
      gather_rows(fed.data.proxy_features, targets.sample_indices);

  // Phase 5: local steps then distillation steps, per client.
  parallel_for(K, [&](std::size_t k) {
    ClientState& cs = fed.clients[k];
    const std::uint64_t r = static_cast<std::uint64_t>(round_index);
    if (config.weighted && !targets.empty()) {
      // Single-batch weighted mode: each step combines a local batch and a
      // proxy batch under loss alpha*CE_local + (1-alpha)*CE_proxy.
      RngStream local_rng = cs.rng.child("local", r);
      RngStream dist_rng = cs.rng.child("distill", r);
      const std::size_t steps = std::max<std::size_t>(config.train.s_local, 1);
      double local_sum = 0.0;
      double proxy_sum = 0.0;
      for (std::size_t s = 0; s < steps; ++s) {
        std::vector<std::size_t> batch(config.train.local_batch);
        for (std::size_t& b : batch) b = local_rng.next_below(cs.train.size());
        Matrix xl = gather_rows(cs.train.features, batch);
        Matrix tl(batch.size(), C);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          tl.at(i, cs.train.labels[batch[i]]) = 1.0;
        }
        Matrix xp = distill_feats;
        Matrix tp = targets.targets;
        if (distill_feats.rows > config.train.distill_batch) {
          std::vector<std::uint32_t> sel_rows = dist_rng.pick(
              static_cast<std::uint32_t>(distill_feats.rows),
              static_cast<std::uint32_t>(config.train.distill_batch));
          std::sort(sel_rows.begin(), sel_rows.end());
          std::vector<std::size_t> rows(sel_rows.begin(), sel_rows.end());
          xp = gather_rows(distill_feats, rows);
          tp = gather_rows(targets.targets, rows);
        }
        double ll = 0.0;
        double pl = 0.0;
        sgd_step_pair(cs.model, xl, tl, xp, tp, config.train.alpha,
                      config.train.learning_rate, &ll, &pl);
        local_sum += ll;
        proxy_sum += pl;
      }
      log.local_loss[k] = local_sum / static_cast<double>(steps);
      log.distill_loss[k] = proxy_sum / static_cast<double>(steps);
    } else {
      log.local_loss[k] = local_steps(cs, config.train, cs.rng.child("local", r),
                                      config.train.s_local);
      log.distill_loss[k] =
          distill_steps(cs, config.train, cs.rng.child("distill", r),
                        distill_feats, targets.targets, config.train.s_distill);
    }
  });

  // Phase 6: evaluation and bookkeeping.
  evaluate_into(fed, log);

  CommModel comm;
  comm.num_classes = C;
  RoundCommStats stats;
  stats.num_clients = K;
  stats.kept_records = log.kept_records;
  for (std::size_t k = 0; k < K; ++k) {
    stats.packets_per_client.push_back(per_client_packets[k].size());
  }
  const CommBytes bytes = comm_bytes_round(stats, config.mode, comm, config.method);
  log.upload_bytes = bytes.upload;
  log.download_bytes = bytes.download;
  const std::size_t item = item_bytes(comm, config.mode);
  for (std::size_t k = 0; k < K; ++k) {
    log.upload_bytes_per_client[k] = per_client_packets[k].size() * item;
    log.download_bytes_per_client[k] = log.kept_records * item;
    log.client_kept_fraction[k] =
        log.candidate_count > 0
            ? static_cast<double>(per_client_packets[k].size()) /
                  static_cast<double>(log.candidate_count)
            : 0.0;
  }
  log.p_proxy_client =
      log.candidate_count > 0
          ? static_cast<double>(log.aggregated_records) /
                static_cast<double>(log.candidate_count)
          : 0.0;
  log.p_proxy_server =
      log.aggregated_records > 0
          ? static_cast<double>(log.kept_records) /
                static_cast<double>(log.aggregated_records)
          : 0.0;

  fill_diagnostics(fed, config, records, log);

  if (candidates_out != nullptr) *candidates_out = std::move(candidate_ids);
  if (records_out != nullptr) *records_out = std::move(records);
  return log;
}

RoundLog run_indep_round(Federation& fed, const ExperimentConfig& config,
                         int round_index) {
  RoundLog log = blank_log(fed, round_index);
  parallel_for(fed.clients.size(), [&](std::size_t k) {
    ClientState& cs = fed.clients[k];
    log.local_loss[k] = local_steps(
        cs, config.train,
        cs.rng.child("local", static_cast<std::uint64_t>(round_index)),
        config.train.s_local);
  });
  evaluate_into(fed, log);
  return log;
}

RoundLog run_fedavg_round(Federation& fed, const ExperimentConfig& config,
                          int round_index) {
  const std::size_t K = fed.clients.size();
  for (const ClientState& cs : fed.clients) {
    if (cs.model.layer_dims != fed.clients[0].model.layer_dims) {
      throw ConfigError("run_fedavg_round: heterogeneous model architectures");
    }
  }
  RoundLog log = blank_log(fed, round_index);

  const std::size_t steps = config.train.s_local + config.train.s_distill;
  parallel_for(K, [&](std::size_t k) {
    ClientState& cs = fed.clients[k];
    log.local_loss[k] = local_steps(
        cs, config.train,
        cs.rng.child("local", static_cast<std::uint64_t>(round_index)), steps);
  });

  // Parameter averaging and broadcast, in fixed client order.
  std::vector<double> weights(K, 1.0 / static_cast<double>(K));
  if (config.fedavg_size_weighted) {
    double total = 0.0;
    for (const ClientState& cs : fed.clients) {
      total += static_cast<double>(cs.train.size());
    }
    for (std::size_t k = 0; k < K; ++k) {
      weights[k] = static_cast<double>(fed.clients[k].train.size()) / total;
    }
  }
  MlpModel mean = fed.clients[0].model;
  for (Matrix& w : mean.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
  for (auto& b : mean.biases) std::fill(b.begin(), b.end(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const MlpModel& m = fed.clients[k].model;
    for (std::size_t l = 0; l < mean.weights.size(); ++l) {
      for (std::size_t i = 0; i < mean.weights[l].data.size(); ++i) {
        mean.weights[l].data[i] += weights[k] * m.weights[l].data[i];
      }
      for (std::size_t j = 0; j < mean.biases[l].size(); ++j) {
        mean.biases[l][j] += weights[k] * m.biases[l][j];
      }
    }
  }
  for (ClientState& cs : fed.clients) cs.model = mean;

  evaluate_into(fed, log);

  CommModel comm;
  comm.num_classes = static_cast<std::size_t>(fed.data.num_classes);
  comm.param_count = mean.param_count();
  RoundCommStats stats;
  stats.num_clients = K;
  const CommBytes bytes =
      comm_bytes_round(stats, config.mode, comm, Method::FedAvg);
  log.upload_bytes = bytes.upload;
  log.download_bytes = bytes.download;
  const std::size_t per_client = comm.param_count * comm.bytes_per_float;
  for (std::size_t k = 0; k < K; ++k) {
    log.upload_bytes_per_client[k] = per_client;
    log.download_bytes_per_client[k] = per_client;
  }
  return log;
}

std::vector<RoundLog> run_experiment(const ExperimentConfig& config,
                                     const RoundObserver& observer) {
  config.validate();
  Federation fed = setup(config);
  pretrain(fed, config);

  std::vector<RoundLog> logs;
  const std::vector<EnsembleRecord> no_records;
  const std::vector<std::size_t> no_candidates;

  if (config.rounds == 0) {
    RoundLog log = evaluate_clients(fed, config, 0);
    if (observer) observer({log, no_records, no_candidates, fed});
    logs.push_back(std::move(log));
    return logs;
  }

  for (int t = 1; t <= config.rounds; ++t) {
    RoundLog log;
    std::vector<EnsembleRecord> records;
    std::vector<std::size_t> candidates;
    switch (config.method) {
      case Method::Selective:
      case Method::NoSelector:
        log = run_round(fed, config, t, &records, &candidates);
        break;
      case Method::Indep:
        log = run_indep_round(fed, config, t);
        break;
      case Method::FedAvg:
        log = run_fedavg_round(fed, config, t);
        break;
    }
    if (observer) observer({log, records, candidates, fed});
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace sfd
