// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "escm/dataset.hpp"
#include "escm/model.hpp"

namespace escm::evaluate {

struct MetricBlock {
  double auc = 0.0;
  double ks = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
};

struct EvalReport {
  MetricBlock cvr;    // scored on clicked rows (observed conversion labels)
  MetricBlock ctcvr;  // scored on every row
  double bias_mean_estimate = 0.0;
  double bias_reference = 0.0;
  double bias = 0.0;
  std::string bias_reference_kind;  // "oracle" or "clicked_label_mean"
  std::size_t n_rows = 0;
  std::size_t n_clicked = 0;
};

/// Scores a trained model on a dataset. CVR ranking uses the clicked subset,
/// CTCVR ranking the whole set; the bias block compares the mean CVR estimate
/// over all rows against `oracle_reference` when provided, otherwise against
/// the clicked-subset conversion label mean. Metrics undefined on the given
/// data (single-class subsets) come back as NaN.
EvalReport evaluate_model(const model::ModelParams& params,
                          const data::Dataset& dataset,
                          std::optional<double> oracle_reference = std::nullopt);

/// Same scoring, but over externally supplied predictions (used by tests and
/// by checkpoint-free diagnostics).
EvalReport evaluate_predictions(const std::vector<double>& cvr_scores,
                                const std::vector<double>& ctcvr_scores,
                                const data::Dataset& dataset,
                                std::optional<double> oracle_reference);

nlohmann::json to_json(const EvalReport& report);

}  // namespace escm::evaluate
