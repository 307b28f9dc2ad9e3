// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/evaluate.hpp"

#include <cmath>
#include <limits>

#include "escm/error.hpp"
#include "escm/metrics.hpp"

namespace escm::evaluate {

namespace {

MetricBlock score_set(const metrics::ScoredSet& set) {
  MetricBlock block;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    block.auc = metrics::auc(set);
    block.ks = metrics::ks(set);
  } catch (const UndefinedMetricError&) {
    block.auc = nan;
    block.ks = nan;
  }
  try {
    const metrics::PrBest pr = metrics::best_pr_f1_recall(set);
    block.f1 = pr.f1;
    block.recall = pr.recall;
  } catch (const UndefinedMetricError&) {
    block.f1 = nan;
    block.recall = nan;
  }
  return block;
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<double>& cvr_scores,
                                const std::vector<double>& ctcvr_scores,
                                const data::Dataset& dataset,
                                std::optional<double> oracle_reference) {
  if (cvr_scores.size() != dataset.rows.size() ||
      ctcvr_scores.size() != dataset.rows.size()) {
    throw ContractError("evaluate: prediction/dataset size mismatch");
  }
  if (dataset.rows.empty()) throw ContractError("evaluate: empty dataset");

  metrics::ScoredSet cvr_set;
  metrics::ScoredSet ctcvr_set;
  double clicked_label_sum = 0.0;
  std::size_t clicked = 0;
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    const data::Row& row = dataset.rows[i];
    if (row.click == 1) {
      cvr_set.scores.push_back(cvr_scores[i]);
      cvr_set.labels.push_back(row.conversion);
      clicked_label_sum += row.conversion;
      ++clicked;
    }
    ctcvr_set.scores.push_back(ctcvr_scores[i]);
    ctcvr_set.labels.push_back(row.conversion);
  }

  EvalReport report;
  report.n_rows = dataset.rows.size();
  report.n_clicked = clicked;
  report.cvr = score_set(cvr_set);
  report.ctcvr = score_set(ctcvr_set);

  if (oracle_reference.has_value()) {
    report.bias_reference = *oracle_reference;
    report.bias_reference_kind = "oracle";
  } else {
    report.bias_reference =
        clicked > 0 ? clicked_label_sum / static_cast<double>(clicked)
                    : std::numeric_limits<double>::quiet_NaN();
    report.bias_reference_kind = "clicked_label_mean";
  }
  report.bias_mean_estimate =
      metrics::cvr_expectation_bias(cvr_scores, 0.0);  // mean(predictions)
  report.bias = report.bias_mean_estimate - report.bias_reference;
  return report;
}

EvalReport evaluate_model(const model::ModelParams& params,
                          const data::Dataset& dataset,
                          std::optional<double> oracle_reference) {
  std::vector<std::vector<std::uint32_t>> ids;
  ids.reserve(dataset.rows.size());
  for (const data::Row& row : dataset.rows) ids.push_back(row.feature_ids);
  const model::PredictionBatch preds = model::predict(params, ids, false);
  return evaluate_predictions(preds.cvr, preds.ctcvr, dataset, oracle_reference);
}

nlohmann::json to_json(const EvalReport& report) {
  auto block = [](const MetricBlock& b) {
    return nlohmann::json{
        {"auc", b.auc}, {"ks", b.ks}, {"f1", b.f1}, {"recall", b.recall}};
  };
  return nlohmann::json{
      {"cvr", block(report.cvr)},
      {"ctcvr", block(report.ctcvr)},
      {"bias",
       {{"mean_estimate", report.bias_mean_estimate},
        {"reference", report.bias_reference},
        {"bias", report.bias},
        {"reference_kind", report.bias_reference_kind}}},
      {"n_rows", report.n_rows},
      {"n_clicked", report.n_clicked},
  };
}

}  // namespace escm::evaluate
