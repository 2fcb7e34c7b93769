#include "sfd/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "sfd/error.hpp"

namespace sfd {

double l1_ambiguity(const std::vector<double>& prob) {
  if (prob.empty()) throw ParameterError("l1_ambiguity: empty vector");
  double m = prob[0];
  for (double v : prob) m = std::max(m, v);
  return 2.0 * (1.0 - m);
}

std::vector<double> one_hot(std::size_t num_classes, std::size_t cls) {
  if (cls >= num_classes) throw ParameterError("one_hot: class out of range");
  std::vector<double> v(num_classes, 0.0);
  v[cls] = 1.0;
  return v;
}

std::vector<double> density_scores(
    const std::vector<RatioEstimator>& estimators, const Matrix& candidates,
    const std::vector<std::vector<double>>* precomputed_ratios) {
  if (estimators.empty()) {
    throw StateError("density_scores: client has no ratio estimators");
  }
  const std::size_t n = candidates.rows;
  std::vector<double> scores(n, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    if (!estimators[e].threshold.has_value()) {
      throw StateError("density_scores: estimator not calibrated");
    }
    const double threshold = *estimators[e].threshold;
    std::vector<double> ratios;
    const std::vector<double>* r;
    if (precomputed_ratios != nullptr) {
      if ((*precomputed_ratios)[e].size() != n) {
        throw ShapeError("density_scores: precomputed ratio length mismatch");
      }
      r = &(*precomputed_ratios)[e];
    } else {
      ratios = estimate_ratio(estimators[e], candidates);
      r = &ratios;
    }
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::max(scores[i], (*r)[i] - threshold);
    }
  }
  return scores;
}

std::vector<KnowledgePacket> client_filter(
    const std::vector<RatioEstimator>& estimators, const Matrix& candidates,
    const std::vector<std::size_t>& candidate_ids, const Matrix& local_probs,
    int client_id, KnowledgeMode mode, const SelectorConfig& config,
    const std::vector<std::vector<double>>* precomputed_ratios) {
  const std::size_t n = candidates.rows;
  if (candidate_ids.size() != n || local_probs.rows != n) {
    throw ShapeError("client_filter: candidate count mismatch");
  }

  std::vector<bool> keep(n, true);
  switch (config.client_strategy) {
    case ClientStrategy::DensityRatio: {
      const std::vector<double> scores =
          density_scores(estimators, candidates, precomputed_ratios);
      for (std::size_t i = 0; i < n; ++i) keep[i] = scores[i] >= 0.0;
      break;
    }
    case ClientStrategy::Confidence: {
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = local_probs.row_span(i);
        double m = row[0];
        for (double v : row) m = std::max(m, v);
        keep[i] = m >= config.confidence_cutoff;
      }
      break;
    }
    case ClientStrategy::None:
      break;
  }

  std::vector<KnowledgePacket> packets;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    KnowledgePacket p;
    p.sample_index = candidate_ids[i];
    p.client_id = client_id;
    if (mode == KnowledgeMode::Hard) {
      p.payload = static_cast<int>(argmax(local_probs.row_span(i)));
    } else {
      const auto row = local_probs.row_span(i);
      p.payload = std::vector<double>(row.begin(), row.end());
    }
    packets.push_back(std::move(p));
  }
  return packets;
}

std::vector<EnsembleRecord> server_aggregate(
    const std::vector<KnowledgePacket>& packets, std::size_t num_classes) {
  if (num_classes < 2) throw ParameterError("server_aggregate: need >= 2 classes");

  bool saw_hard = false;
  bool saw_soft = false;
  std::map<std::size_t, std::vector<const KnowledgePacket*>> groups;
  for (const KnowledgePacket& p : packets) {
    if (std::holds_alternative<int>(p.payload)) {
      saw_hard = true;
    } else {
      saw_soft = true;
      if (std::get<std::vector<double>>(p.payload).size() != num_classes) {
        throw ProtocolError("server_aggregate: soft payload length mismatch");
      }
    }
    groups[p.sample_index].push_back(&p);
  }
  if (saw_hard && saw_soft) {
    throw ProtocolError("server_aggregate: mixed hard and soft payloads in one round");
  }

  std::vector<EnsembleRecord> records;
  records.reserve(groups.size());
  for (auto& [sample_index, group] : groups) {
    std::sort(group.begin(), group.end(),
              [](const KnowledgePacket* a, const KnowledgePacket* b) {
                return a->client_id < b->client_id;
              });
    std::vector<double> sum(num_classes, 0.0);
    for (const KnowledgePacket* p : group) {
      if (const int* hard = std::get_if<int>(&p->payload)) {
        if (*hard < 0 || static_cast<std::size_t>(*hard) >= num_classes) {
          throw ProtocolError("server_aggregate: hard label out of range");
        }
        sum[*hard] += 1.0;
      } else {
        const auto& soft = std::get<std::vector<double>>(p->payload);
        for (std::size_t c = 0; c < num_classes; ++c) sum[c] += soft[c];
      }
    }
    EnsembleRecord rec;
    rec.sample_index = sample_index;
    rec.contributor_count = static_cast<int>(group.size());
    const double inv = 1.0 / static_cast<double>(group.size());
    for (double& v : sum) v *= inv;
    rec.mean_prediction = std::move(sum);
    rec.l1_ambiguity = l1_ambiguity(rec.mean_prediction);
    records.push_back(std::move(rec));
  }
  return records;
}

void server_filter(std::vector<EnsembleRecord>& records, double tau_server) {
  if (!(tau_server > 0.0)) {
    throw ParameterError("server_filter: tau_server must be positive");
  }
  for (EnsembleRecord& rec : records) {
    rec.kept = rec.l1_ambiguity <= tau_server;
  }
}

DistillTargets distill_targets(const std::vector<EnsembleRecord>& records,
                               KnowledgeMode mode) {
  std::vector<const EnsembleRecord*> kept;
  for (const EnsembleRecord& rec : records) {
    if (rec.kept) kept.push_back(&rec);
  }
  std::sort(kept.begin(), kept.end(),
            [](const EnsembleRecord* a, const EnsembleRecord* b) {
              return a->sample_index < b->sample_index;
            });

  DistillTargets out;
  if (kept.empty()) return out;
  const std::size_t C = kept.front()->mean_prediction.size();
  out.targets = Matrix(kept.size(), C);
  out.sample_indices.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    out.sample_indices.push_back(kept[i]->sample_index);
    const std::vector<double>& mean = kept[i]->mean_prediction;
    double* row = out.targets.row(i);
    if (mode == KnowledgeMode::Soft) {
      std::copy(mean.begin(), mean.end(), row);
    } else {
      row[argmax(mean)] = 1.0;
    }
  }
  return out;
}

}  // namespace sfd
