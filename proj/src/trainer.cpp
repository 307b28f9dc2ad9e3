// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "escm/error.hpp"
#include "escm/log.hpp"
#include "escm/metrics.hpp"
#include "escm/rng.hpp"

namespace escm::trainer {

namespace {

constexpr std::uint64_t kInitStream = 101;
constexpr std::uint64_t kShuffleStream = 102;

struct ValMetrics {
  double auc_cvr = std::numeric_limits<double>::quiet_NaN();
  double auc_ctcvr = std::numeric_limits<double>::quiet_NaN();
};

ValMetrics validation_metrics(const model::ModelParams& params,
                              const data::Dataset& val_set) {
  ValMetrics out;
  if (val_set.rows.empty()) return out;
  std::vector<std::vector<std::uint32_t>> ids;
  ids.reserve(val_set.rows.size());
  for (const data::Row& row : val_set.rows) ids.push_back(row.feature_ids);
  const model::PredictionBatch preds = model::predict(params, ids, false);

  // Conversion labels exist only inside the click space, so CVR ranking is
  // scored on clicked rows; CTCVR is scored on everything.
  metrics::ScoredSet cvr_set;
  metrics::ScoredSet ctcvr_set;
  for (std::size_t i = 0; i < val_set.rows.size(); ++i) {
    const data::Row& row = val_set.rows[i];
    if (row.click == 1) {
      cvr_set.scores.push_back(preds.cvr[i]);
      cvr_set.labels.push_back(row.conversion);
    }
    ctcvr_set.scores.push_back(preds.ctcvr[i]);
    ctcvr_set.labels.push_back(row.conversion);
  }
  try {
    out.auc_cvr = metrics::auc(cvr_set);
  } catch (const UndefinedMetricError&) {
  }
  try {
    out.auc_ctcvr = metrics::auc(ctcvr_set);
  } catch (const UndefinedMetricError&) {
  }
  return out;
}

// NaN-aware "a is better than b" with CVR AUC primary, CTCVR AUC tie-break.
bool better_checkpoint(const CheckpointRecord& a, const CheckpointRecord& b) {
  auto key = [](double x) {
    return std::isnan(x) ? -std::numeric_limits<double>::infinity() : x;
  };
  if (key(a.val_auc_cvr) != key(b.val_auc_cvr)) {
    return key(a.val_auc_cvr) > key(b.val_auc_cvr);
  }
  return key(a.val_auc_ctcvr) > key(b.val_auc_ctcvr);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: adam betas must lie in (0,1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("train: adam_epsilon must be > 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (checkpoint_every == 0) throw ConfigError("train: checkpoint_every must be >= 1");
  risk.validate();
}

void adam_step(model::ModelParams& params, const GradientMap& gradients,
               AdamState& state, const TrainConfig& config) {
  state.step += 1;
  const double bias1 = 1.0 - std::pow(config.adam_beta1,
                                      static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(config.adam_beta2,
                                      static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const std::string& name = params.names[i];
    auto it = gradients.find(name);
    if (it == gradients.end()) continue;
    const diff::Tensor& g = it->second;
    if (!g.all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + name +
                         "' at step " + std::to_string(state.step));
    }
    diff::Tensor& theta = params.tensors[i];
    diff::Tensor& m = state.m.try_emplace(name, diff::Tensor::zeros(theta.shape))
                          .first->second;
    diff::Tensor& v = state.v.try_emplace(name, diff::Tensor::zeros(theta.shape))
                          .first->second;
    const double decay = 1.0 - config.learning_rate * config.weight_decay;
    for (std::size_t k = 0; k < theta.v.size(); ++k) {
      theta.v[k] *= decay;
      m.v[k] = config.adam_beta1 * m.v[k] + (1.0 - config.adam_beta1) * g.v[k];
      v.v[k] = config.adam_beta2 * v.v[k] +
               (1.0 - config.adam_beta2) * g.v[k] * g.v[k];
      const double m_hat = m.v[k] / bias1;
      const double v_hat = v.v[k] / bias2;
      theta.v[k] -=
          config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

TrainResult train(const data::Dataset& train_set, const data::Dataset& val_set,
                  const model::ModelConfig& model_config,
                  const TrainConfig& config) {
  config.validate();
  data::validate(train_set);
  data::validate(val_set);
  if (train_set.rows.empty()) throw ContractError("train: empty training set");

  rng::Stream root(config.seed);
  TrainResult result;
  result.params = model::init_params(model_config,
                                     root.fork(kInitStream).next_u64());
  if (config.max_iterations == 0) {
    return result;
  }

  model::ModelParams best = result.params;
  CheckpointRecord best_record;
  bool have_best = false;
  AdamState adam;
  rng::Stream shuffle_stream = root.fork(kShuffleStream);
  const bool with_imputation = config.risk.needs_imputation_tower();

  std::vector<std::size_t> order(train_set.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle before the first batch
  std::size_t epoch = 0;

  double window_objective = 0.0, window_ctr = 0.0, window_cvr = 0.0,
         window_ctcvr = 0.0;
  std::size_t window_count = 0;

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    // Assemble the next shuffled minibatch, reshuffling at epoch boundaries.
    std::vector<std::vector<std::uint32_t>> batch_ids;
    std::vector<const data::Row*> batch_rows;
    batch_ids.reserve(config.batch_size);
    batch_rows.reserve(config.batch_size);
    while (batch_rows.size() < config.batch_size) {
      if (cursor == order.size()) {
        rng::Stream epoch_stream = shuffle_stream.fork(epoch++);
        rng::shuffle(order, epoch_stream);
        cursor = 0;
        if (!batch_rows.empty()) break;  // keep batches within one epoch
      }
      const data::Row& row = train_set.rows[order[cursor++]];
      batch_rows.push_back(&row);
      batch_ids.push_back(row.feature_ids);
    }

    diff::Tape tape;
    model::BoundModel bound =
        model::bind_forward(tape, result.params, batch_ids, with_imputation);
    risks::Labels labels = risks::Labels::from_rows(batch_rows);
    risks::ObjectiveTerms terms = risks::objective(tape, bound, labels, config.risk);
    if (terms.zero_click_batch) result.history.zero_click_batches += 1;

    const double objective_value = tape.value(terms.objective).v[0];
    if (!std::isfinite(objective_value)) {
      result.aborted = true;
      result.abort_reason =
          "objective became non-finite at iteration " + std::to_string(it);
      break;
    }
    window_objective += objective_value;
    window_ctr += tape.value(terms.l_ctr).v[0];
    window_cvr += tape.value(terms.l_cvr).v[0];
    window_ctcvr += tape.value(terms.l_ctcvr).v[0];
    window_count += 1;

    tape.backward(terms.objective);
    GradientMap grads;
    grads.reserve(bound.params.size());
    for (const auto& [name, var] : bound.params) {
      grads.emplace(name, tape.grad(var));
    }
    try {
      adam_step(result.params, grads, adam, config);
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }

    const bool at_checkpoint = (it % config.checkpoint_every == 0);
    const bool at_end = (it == config.max_iterations);
    if (at_checkpoint || at_end) {
      CheckpointRecord record;
      record.iteration = it;
      record.objective = window_objective / static_cast<double>(window_count);
      record.l_ctr = window_ctr / static_cast<double>(window_count);
      record.l_cvr = window_cvr / static_cast<double>(window_count);
      record.l_ctcvr = window_ctcvr / static_cast<double>(window_count);
      window_objective = window_ctr = window_cvr = window_ctcvr = 0.0;
      window_count = 0;

      const ValMetrics vm = validation_metrics(result.params, val_set);
      record.val_auc_cvr = vm.auc_cvr;
      record.val_auc_ctcvr = vm.auc_ctcvr;

      const bool is_best = !have_best || better_checkpoint(record, best_record);
      result.history.records.push_back(record);
      if (is_best) {
        best = result.params;
        best_record = record;
        have_best = true;
        result.history.best_checkpoint = record.iteration;
      }
      log::debug("iter ", it, " objective ", record.objective, " val_auc_cvr ",
                 record.val_auc_cvr);
      if (at_end) break;
    }
  }

  // On abort before any checkpoint, `best` still holds the init snapshot:
  // the caller always gets finite parameters.
  if (have_best || result.aborted) {
    result.params = std::move(best);
  }
  return result;
}

void export_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "iteration,objective,l_ctr,l_cvr,l_ctcvr,val_auc_cvr,val_auc_ctcvr\n";
  char line[256];
  for (const CheckpointRecord& r : history.records) {
    std::snprintf(line, sizeof(line), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  r.iteration, r.objective, r.l_ctr, r.l_cvr, r.l_ctcvr,
                  r.val_auc_cvr, r.val_auc_ctcvr);
    out << line;
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace escm::trainer
