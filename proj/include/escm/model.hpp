// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// The estimator network: one embedding lookup table shared by a CTR tower, a
// CVR tower and an optional imputation tower. CTR and CVR heads are sigmoid;
// the imputation head is softplus because it predicts a loss value, which is
// nonnegative but not bounded by 1. CTCVR is always the exact product of the
// CTR and CVR outputs.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "escm/diff.hpp"

namespace escm::model {

struct ModelConfig {
  std::size_t num_feature_categories = 0;
  std::size_t embed_dim = 5;
  std::vector<std::size_t> tower_hidden = {32, 16};

  void validate() const;
};

/// Named parameter tensors in a fixed order: embedding first, then the ctr /
/// cvr / imp towers layer by layer.
struct ModelParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<diff::Tensor> tensors;

  diff::Tensor& find(const std::string& name);
  const diff::Tensor& find(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Glorot-uniform weights, zero biases; deterministic per seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// The model bound onto a tape for one batch: parameter leaves by name plus
/// the prediction heads, each a [batch] vector.
struct BoundModel {
  std::unordered_map<std::string, diff::Var> params;
  diff::Var ctr_hat;
  diff::Var cvr_hat;
  diff::Var ctcvr_hat;
  diff::Var imputed_error;  // valid only when built with_imputation
  bool has_imputation = false;
};

/// Builds the forward graph for a batch of feature-id lists. Parameters enter
/// the tape as gradient-tracked leaves; the imputation tower is built only on
/// request. Rows must be nonempty and ids must be inside the vocab.
BoundModel bind_forward(diff::Tape& tape, const ModelParams& params,
                        const std::vector<std::vector<std::uint32_t>>& feature_ids,
                        bool with_imputation);

struct PredictionBatch {
  std::vector<double> ctr;
  std::vector<double> cvr;
  std::vector<double> ctcvr;
  std::vector<double> imputed;  // empty unless with_imputation
};

/// Gradient-free forward over arbitrarily many rows (chunked internally).
PredictionBatch predict(const ModelParams& params,
                        const std::vector<std::vector<std::uint32_t>>& feature_ids,
                        bool with_imputation = false);

/// JSON checkpoint; values round-trip bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace escm::model
