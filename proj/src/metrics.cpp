// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "escm/error.hpp"

namespace escm::metrics {

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts count_classes(const ScoredSet& set) {
  if (set.scores.size() != set.labels.size()) {
    throw ContractError("scored set: scores/labels length mismatch");
  }
  ClassCounts c;
  for (std::uint8_t l : set.labels) {
    if (l) {
      ++c.positives;
    } else {
      ++c.negatives;
    }
  }
  return c;
}

std::vector<std::size_t> order_by_score_desc(const ScoredSet& set) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return set.scores[a] > set.scores[b];
  });
  return order;
}

}  // namespace

double auc(const ScoredSet& set) {
  const ClassCounts counts = count_classes(set);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw UndefinedMetricError("auc undefined: need both classes");
  }
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return set.scores[a] < set.scores[b];
  });

  // Mann-Whitney U with midranks over tied scores.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           set.scores[order[j]] == set.scores[order[i]]) {
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (set.labels[order[k]]) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double n1 = static_cast<double>(counts.positives);
  const double n0 = static_cast<double>(counts.negatives);
  const double u = rank_sum_pos - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n0);
}

double ks(const ScoredSet& set) {
  const ClassCounts counts = count_classes(set);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw UndefinedMetricError("ks undefined: need both classes");
  }
  const std::vector<std::size_t> order = order_by_score_desc(set);
  const double n1 = static_cast<double>(counts.positives);
  const double n0 = static_cast<double>(counts.negatives);

  double best = 0.0;  // threshold +inf: TPR = FPR = 0
  double tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double score = set.scores[order[i]];
    while (i < order.size() && set.scores[order[i]] == score) {
      if (set.labels[order[i]]) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++i;
    }
    best = std::max(best, std::fabs(tp / n1 - fp / n0));
  }
  return best;
}

PrBest best_pr_f1_recall(const ScoredSet& set) {
  const ClassCounts counts = count_classes(set);
  if (counts.positives == 0) {
    throw UndefinedMetricError("pr metrics undefined: no positive labels");
  }
  const std::vector<std::size_t> order = order_by_score_desc(set);
  const double n1 = static_cast<double>(counts.positives);

  PrBest best;
  best.threshold = std::numeric_limits<double>::infinity();  // predict none
  double tp = 0.0, predicted = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double score = set.scores[order[i]];
    while (i < order.size() && set.scores[order[i]] == score) {
      if (set.labels[order[i]]) tp += 1.0;
      predicted += 1.0;
      ++i;
    }
    const double precision = tp / predicted;
    const double recall = tp / n1;
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    if (f1 >= best.f1) {  // >= so ties land on the lower threshold
      best.f1 = f1;
      best.recall = recall;
      best.threshold = score;
    }
  }
  return best;
}

double cvr_expectation_bias(const std::vector<double>& predictions,
                            double reference) {
  if (predictions.empty()) {
    throw ContractError("cvr_expectation_bias: empty predictions");
  }
  const double mean =
      std::accumulate(predictions.begin(), predictions.end(), 0.0) /
      static_cast<double>(predictions.size());
  return mean - reference;
}

}  // namespace escm::metrics
