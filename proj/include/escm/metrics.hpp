// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Ranking and calibration metrics: AUC (midrank ties), KS at the best ROC
// threshold, F1/Recall at the best PR threshold, and the mean-estimate bias
// against a reference conversion expectation. Threshold sweeps evaluate at
// observed score values plus +inf, which is where piecewise-constant curves
// change.

#pragma once

#include <cstdint>
#include <vector>

namespace escm::metrics {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 0/1

  std::size_t size() const { return scores.size(); }
};

/// Probability that a random positive outranks a random negative; ties get
/// half credit. Throws UndefinedMetricError unless both classes are present.
double auc(const ScoredSet& set);

/// max over thresholds of |TPR - FPR|.
double ks(const ScoredSet& set);

struct PrBest {
  double f1 = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

/// Sweeps thresholds, keeps the one maximizing F1; F1 ties resolve to the
/// lower threshold (higher recall). Requires at least one positive label.
PrBest best_pr_f1_recall(const ScoredSet& set);

/// mean(predictions) - reference.
double cvr_expectation_bias(const std::vector<double>& predictions,
                            double reference);

}  // namespace escm::metrics
