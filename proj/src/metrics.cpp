#include "sfd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfd/error.hpp"

namespace sfd {

double accuracy(const MlpModel& model, const LabeledDataset& test) {
  if (test.size() == 0) throw ParameterError("accuracy: empty test set");
  const std::vector<int> pred = predict_hard(model, test.features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == test.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double auroc(std::span<const double> scores,
             const std::vector<bool>& is_positive) {
  if (scores.size() != is_positive.size()) {
    throw ShapeError("auroc: length mismatch");
  }
  std::size_t n_pos = 0;
  for (bool b : is_positive) n_pos += b ? 1 : 0;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ParameterError("auroc: need at least one positive and one negative");
  }

  // Rank-sum with average ranks over tied score runs.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (is_positive[order[k]]) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double u = pos_rank_sum -
                   0.5 * static_cast<double>(n_pos) *
                       static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double entropy(std::span<const double> p) {
  if (p.empty()) throw ParameterError("entropy: empty vector");
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0) throw ParameterError("entropy: negative entry");
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::size_t item_bytes(const CommModel& model, KnowledgeMode mode) {
  const std::size_t payload = mode == KnowledgeMode::Hard
                                  ? model.bytes_per_index
                                  : model.num_classes * model.bytes_per_float;
  return model.bytes_per_index + payload;
}

CommBytes comm_bytes_round(const RoundCommStats& stats, KnowledgeMode mode,
                           const CommModel& model, Method method) {
  CommBytes out;
  switch (method) {
    case Method::Indep:
      break;
    case Method::FedAvg: {
      const std::size_t per_client = model.param_count * model.bytes_per_float;
      out.upload = stats.num_clients * per_client;
      out.download = stats.num_clients * per_client;
      break;
    }
    case Method::Selective:
    case Method::NoSelector: {
      const std::size_t item = item_bytes(model, mode);
      for (std::size_t p : stats.packets_per_client) out.upload += p * item;
      out.download = stats.kept_records * item * stats.num_clients;
      break;
    }
  }
  return out;
}

double hoeffding_term(double alpha, std::size_t m_k, std::size_t m_proxy,
                      double delta) {
  if (m_k < 1 || m_proxy < 1) {
    throw ParameterError("hoeffding_term: sample counts must be >= 1");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ParameterError("hoeffding_term: delta must lie in (0, 1)");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("hoeffding_term: alpha must lie in [0, 1]");
  }
  const double a2 = alpha * alpha;
  const double b2 = (1.0 - alpha) * (1.0 - alpha);
  return std::sqrt((2.0 * a2 / static_cast<double>(m_k) +
                    2.0 * b2 / static_cast<double>(m_proxy)) *
                   std::log(2.0 / delta));
}

BoundDiagnostics bound_diagnostics(const std::vector<EnsembleRecord>& records,
                                   const std::vector<int>& proxy_truth) {
  BoundDiagnostics out;
  std::size_t kept = 0;
  std::size_t mismatched = 0;
  double misleading_sum = 0.0;
  double ambiguous_sum = 0.0;
  for (const EnsembleRecord& rec : records) {
    if (!rec.kept) continue;
    if (rec.sample_index >= proxy_truth.size()) {
      throw ParameterError("bound_diagnostics: sample index outside truth vector");
    }
    ++kept;
    const int truth = proxy_truth[rec.sample_index];
    const std::size_t pred = argmax(rec.mean_prediction);
    if (static_cast<int>(pred) != truth) {
      ++mismatched;
      misleading_sum += 2.0 * (1.0 - rec.mean_prediction[truth]);
    } else {
      ambiguous_sum += rec.l1_ambiguity;
    }
  }
  if (kept == 0) return out;  // p1=0, p2=1, both terms 0
  out.p1 = static_cast<double>(mismatched) / static_cast<double>(kept);
  out.p2 = 1.0 - out.p1;
  if (mismatched > 0) {
    out.misleading_term = misleading_sum / static_cast<double>(mismatched);
  }
  const std::size_t matched = kept - mismatched;
  if (matched > 0) {
    out.ambiguous_term = ambiguous_sum / static_cast<double>(matched);
  }
  return out;
}

}  // namespace sfd
