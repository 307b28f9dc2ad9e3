// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic recommendation worlds with known ground truth. Every user-item
// pair carries a true click-through rate and a true conversion rate given
// click; datasets are drawn from those, and the oracle quantities (ideal
// risk, exposure-space conversion expectation) are computable exactly.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "escm/dataset.hpp"

namespace escm::synth {

struct WorldConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 200;
  /// Categorical vocab sizes for the user- and item-side feature blocks.
  std::size_t user_feature_vocab = 32;
  std::size_t item_feature_vocab = 32;
  std::size_t features_per_user = 2;
  std::size_t features_per_item = 2;
  double target_ctr = 0.04;
  /// Target mean conversion rate given click; 0.1 keeps clicks:conversions
  /// near 10:1.
  double target_cvr = 0.1;
  /// Weight on logit(true_ctr) inside the conversion logit. Positive values
  /// correlate click propensity with conversion propensity.
  double confound_strength = 1.0;
  /// Std-dev of the per-category latent weights feeding both logits.
  double feature_logit_scale = 1.2;
  /// Std-dev of per-pair noise added to the click / conversion logits.
  double ctr_noise = 0.4;
  double cvr_noise = 0.4;

  void validate() const;
};

struct SyntheticWorld {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::size_t num_feature_categories = 0;
  std::vector<std::vector<std::uint32_t>> user_feature_ids;
  std::vector<std::vector<std::uint32_t>> item_feature_ids;
  /// Indexed by pair_id = user * num_items + item.
  std::vector<double> true_ctr;
  std::vector<double> true_cvr_given_click;

  std::size_t num_pairs() const { return true_ctr.size(); }
  std::size_t user_of(std::uint64_t pair_id) const {
    return static_cast<std::size_t>(pair_id) / config.num_items;
  }
  std::size_t item_of(std::uint64_t pair_id) const {
    return static_cast<std::size_t>(pair_id) % config.num_items;
  }
  std::vector<std::uint32_t> pair_features(std::uint64_t pair_id) const;
};

/// Deterministic world construction; identical (config, seed) pairs produce
/// bit-identical worlds. Mean true CTR is calibrated to config.target_ctr and
/// mean true CVR-given-click to config.target_cvr via intercept bisection.
SyntheticWorld generate_world(const WorldConfig& config, std::uint64_t seed);

struct SampledData {
  data::Dataset dataset;
  data::SideTable side;
};

/// Draws `n_pairs` distinct pairs (seeded, without replacement), then per
/// pair: counterfactual conversion ~ Bernoulli(true_cvr_given_click), click ~
/// Bernoulli(true_ctr), observed conversion = click * counterfactual. Both
/// draws are keyed by (seed, pair_id) so results do not depend on generation
/// order.
SampledData sample_dataset(const SyntheticWorld& world, std::size_t n_pairs,
                           std::uint64_t seed);

/// Redraws the click realization for an existing sample while keeping the
/// pair set and the counterfactual conversions frozen. This is what "resample
/// the clicks" means in the unbiasedness checks.
data::Dataset resample_clicks(const SyntheticWorld& world,
                              const data::SideTable& side,
                              std::uint64_t click_seed);

/// Mean binary cross entropy of `cvr_predictions` against the frozen
/// counterfactual conversion labels: the full-information risk that
/// off-policy estimators try to approximate. Predictions are indexed by
/// pair_id over the whole exposure space and must lie strictly inside (0,1).
double oracle_ideal_risk(const std::vector<double>& cvr_predictions,
                         const SyntheticWorld& world,
                         const data::SideTable& side);

/// Mean of true_cvr_given_click over the exposure space.
double oracle_cvr_expectation(const SyntheticWorld& world);

/// Sample Pearson correlation between true CTR and true CVR over all pairs.
double ctr_cvr_correlation(const SyntheticWorld& world);

// CSV export. Dataset: `pair_id,feature_ids,o,r` with feature ids
// ';'-joined. Side table: `pair_id,r_counterfactual`.
void export_dataset_csv(const data::Dataset& dataset, const std::string& path);
void export_side_table_csv(const data::SideTable& side, const std::string& path);

}  // namespace escm::synth
