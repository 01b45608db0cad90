#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "compass/core/error.hpp"

namespace compass {

struct BinaryCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

struct ConfusionMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, mcc = 0;
};

// Zero-denominator conventions: precision/recall/f1 fall back to 0 when
// undefined; mcc falls back to 0 when any factor under the root is 0.
inline ConfusionMetrics confusion_metrics(const BinaryCounts& c) {
  if (c.total() == 0) throw NumericError("confusion_metrics: empty counts");
  ConfusionMetrics m;
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  m.accuracy = (tp + tn) / (tp + tn + fp + fn);
  m.precision = (c.tp + c.fp) > 0 ? tp / (tp + fp) : 0.0;
  m.recall = (c.tp + c.fn) > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = denom > 0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  return m;
}

struct MacroAverage {
  double value = 0.0;
  std::vector<std::size_t> used;      // class indices that entered the mean
  std::vector<std::size_t> excluded;  // zero-support classes left out
};

// Unweighted mean over classes with at least one ground-truth positive.
inline MacroAverage macro_average(const std::vector<double>& per_class, const std::vector<std::size_t>& support) {
  if (per_class.size() != support.size()) throw std::invalid_argument("macro_average: size mismatch");
  MacroAverage out;
  double acc = 0.0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (support[c] > 0) {
      acc += per_class[c];
      out.used.push_back(c);
    } else {
      out.excluded.push_back(c);
    }
  }
  if (out.used.empty()) throw NumericError("macro_average: no class has positive support");
  out.value = acc / static_cast<double>(out.used.size());
  return out;
}

// Rank-statistic AUROC (Mann-Whitney U with average ranks for ties).
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
  std::size_t npos = 0, nneg = 0;
  for (int l : labels) (l ? npos : nneg)++;
  if (npos == 0 || nneg == 0) throw NumericError("auroc: degenerate labels (one class only)");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

// One scored candidate of a ranked retrieval list.
struct RankedCandidate {
  std::string id;
  double score = 0.0;
  bool relevant = false;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedCandidate> candidates;
};

// Average precision by the precision-at-rank sum: candidates ordered by
// score (ties broken by id), AP = (1/|relevant|) sum_k P(k) [rank k hit].
inline double average_precision(RankedList list) {
  std::size_t relevant = 0;
  for (const auto& c : list.candidates) relevant += c.relevant ? 1 : 0;
  if (relevant == 0) throw NumericError("average_precision: query '" + list.query_id + "' has no relevant candidate");
  std::sort(list.candidates.begin(), list.candidates.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  double hits = 0.0, ap = 0.0;
  for (std::size_t k = 0; k < list.candidates.size(); ++k) {
    if (list.candidates[k].relevant) {
      hits += 1.0;
      ap += hits / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(relevant);
}

inline double mean_average_precision(const std::vector<RankedList>& queries) {
  if (queries.empty()) throw NumericError("mean_average_precision: no queries");
  double acc = 0.0;
  for (const auto& q : queries) acc += average_precision(q);
  return acc / static_cast<double>(queries.size());
}

// Step-wise (interpolation-free) area under the precision-recall curve;
// identical to average precision of the ranked list with index tie-break.
inline double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auprc: size mismatch");
  std::size_t npos = 0;
  for (int l : labels) npos += l ? 1 : 0;
  if (npos == 0) throw NumericError("auprc: no positive labels");
  RankedList list;
  list.query_id = "-";
  list.candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%012zu", i);
    list.candidates.push_back({buf, scores[i], labels[i] != 0});
  }
  return average_precision(std::move(list));
}

}  // namespace compass
