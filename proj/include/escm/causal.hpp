// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Diagnostics for the click -> conversion causal link: greedy propensity
// score matching, the causal risk ratio over matched groups, the bias report
// comparing mean CVR estimates against a reference expectation, and the
// lambda-sweep harness that retrains across a parameter grid.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "escm/config.hpp"
#include "escm/dataset.hpp"

namespace escm::causal {

struct MatchedSample {
  /// (clicked row index, matched unclicked row index)
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double caliper = 0.0;
  std::size_t unmatched_count = 0;  // clicked rows left without a neighbor
};

/// 0.2 * std of logit(propensity), the standard caliper rule of thumb.
double default_caliper(const std::vector<double>& propensities);

/// Greedy 1:1 nearest-neighbor matching without replacement. Clicked rows are
/// processed in descending propensity order; each takes the closest unused
/// unclicked row within the caliper. Deterministic: propensity ties resolve
/// by row index. Throws if either class is empty or nothing matches.
MatchedSample psm_match(const std::vector<double>& propensities,
                        const std::vector<std::uint8_t>& click_flags,
                        double caliper);

struct CausalStrengthReport {
  double crr = 0.0;
  double strength = 0.0;  // |crr - 1|
  std::size_t matched_count = 0;
};

/// Ratio of mean outcome over matched clicked rows to mean outcome over
/// matched unclicked rows. Outcomes are the model's CVR estimates.
CausalStrengthReport causal_risk_ratio(const MatchedSample& matched,
                                       const std::vector<double>& outcomes);

struct IebEntry {
  std::string label;
  std::uint64_t seed = 0;
  double mean_cvr_estimate = 0.0;
};

struct IebRow {
  std::string label;
  std::size_t n_seeds = 0;
  double mean_estimate = 0.0;
  double reference = 0.0;
  double bias = 0.0;
  double std_across_seeds = 0.0;
};

/// Aggregates per-(model, seed) mean CVR estimates by label, reporting the
/// bias against the reference expectation and the spread across seeds.
std::vector<IebRow> ieb_report(const std::vector<IebEntry>& entries,
                               double reference);

enum class SweepParam { lambda_c, lambda_g };

SweepParam sweep_param_from_string(const std::string& name);
std::string to_string(SweepParam param);

struct SweepCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double auc_cvr = 0.0;
  double ks_cvr = 0.0;
  double auc_ctcvr = 0.0;
  double ks_ctcvr = 0.0;
};

/// Trains one model per (grid value, seed) with the chosen lambda overridden,
/// evaluating each on a freshly realized test set from the same world. Cell
/// failures are recorded and do not stop the sweep. `jobs` bounds the number
/// of concurrent training jobs.
std::vector<SweepCell> sweep(SweepParam param, const std::vector<double>& grid,
                             const config::ExperimentConfig& base,
                             const std::vector<std::uint64_t>& seeds,
                             unsigned jobs = 1);

/// CSV: param,value,seed,auc_cvr,ks_cvr,auc_ctcvr,ks_ctcvr
void export_sweep_csv(SweepParam param, const std::vector<SweepCell>& cells,
                      const std::string& path);

}  // namespace escm::causal
