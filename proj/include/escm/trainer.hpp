// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch Adam training with decoupled weight decay, per-epoch reshuffle,
// and periodic validation checkpoints. The best checkpoint maximizes
// validation CVR AUC with CTCVR AUC as the tie-break. Every source of
// randomness derives from TrainConfig::seed, so identical inputs reproduce
// the history bit for bit.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "escm/dataset.hpp"
#include "escm/model.hpp"
#include "escm/risks.hpp"

namespace escm::trainer {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 1024;
  std::size_t max_iterations = 20000;
  std::size_t checkpoint_every = 1000;
  std::uint64_t seed = 1;
  risks::RiskConfig risk;

  void validate() const;
};

struct CheckpointRecord {
  std::size_t iteration = 0;
  // Means over the iterations since the previous checkpoint.
  double objective = 0.0;
  double l_ctr = 0.0;
  double l_cvr = 0.0;
  double l_ctcvr = 0.0;
  double val_auc_cvr = 0.0;
  double val_auc_ctcvr = 0.0;
};

struct TrainHistory {
  std::vector<CheckpointRecord> records;
  std::size_t best_checkpoint = 0;  // iteration id of the best record
  std::size_t zero_click_batches = 0;
};

using GradientMap = std::unordered_map<std::string, diff::Tensor>;

struct AdamState {
  std::unordered_map<std::string, diff::Tensor> m;
  std::unordered_map<std::string, diff::Tensor> v;
  std::size_t step = 0;
};

/// One optimizer step. Weight decay multiplies parameters by (1 - lr*wd)
/// before the Adam delta. Parameters without a gradient entry are untouched.
/// Throws NumericError on a non-finite gradient, naming the parameter.
void adam_step(model::ModelParams& params, const GradientMap& gradients,
               AdamState& state, const TrainConfig& config);

struct TrainResult {
  model::ModelParams params;  // best checkpoint (last good one on abort)
  TrainHistory history;
  bool aborted = false;
  std::string abort_reason;
};

TrainResult train(const data::Dataset& train_set, const data::Dataset& val_set,
                  const model::ModelConfig& model_config,
                  const TrainConfig& config);

/// CSV: iteration,objective,l_ctr,l_cvr,l_ctcvr,val_auc_cvr,val_auc_ctcvr
void export_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace escm::trainer
