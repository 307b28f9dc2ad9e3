// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Loss and risk estimators over prediction/label batches, built as graph
// expressions so the trainer gets gradients for free:
//
//   loss_naive    mean CVR error over clicked rows only (divides by |clicks|)
//   loss_ctr      mean click error over the whole batch
//   loss_ctcvr    mean click&conversion error over the whole batch
//   risk_ips      clicked CVR error inversely weighted by clipped propensity,
//                 normalized by the full batch size
//   risk_dr_err   imputed error plus propensity-weighted error deviation
//   risk_dr_imp   propensity-weighted squared error deviation (trains the
//                 imputation tower against the observed error)
//   objective     the per-variant training objective combining the above
//
// Propensity denominators are clamped below by `propensity_clip`, and the
// propensity is wrapped in stop-gradient by default so the CVR risk cannot
// bias the click tower.

#pragma once

#include <string>
#include <vector>

#include "escm/dataset.hpp"
#include "escm/diff.hpp"
#include "escm/model.hpp"

namespace escm::risks {

enum class Variant { naive, mtl_imp, esmm, escm2_ips, escm2_dr };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant variant);

struct RiskConfig {
  Variant variant = Variant::escm2_ips;
  double lambda_c = 0.1;
  double lambda_g = 1.0;
  double propensity_clip = 0.1;
  bool truncate_propensity_gradient = true;
  /// When false (default) the imputation loss treats the live CVR error as a
  /// fixed target, so it trains only the imputation tower.
  bool imputation_updates_cvr = false;

  void validate() const;
  bool needs_imputation_tower() const { return variant == Variant::escm2_dr; }
};

/// Labels for one batch, aligned with the prediction vectors.
struct Labels {
  std::vector<double> click;
  std::vector<double> conversion;

  static Labels from_rows(const std::vector<const data::Row*>& rows);
  static Labels from_dataset(const data::Dataset& dataset);
  std::size_t size() const { return click.size(); }
};

/// Scalar binary cross entropy with the numerical-safety clamp.
double bce(double label, double prediction);

/// Elementwise BCE of a prediction vector against constant labels.
diff::Var bce_vec(diff::Tape& tape, diff::Var predictions,
                  const std::vector<double>& labels);

diff::Var loss_naive(diff::Tape& tape, diff::Var cvr_hat, const Labels& labels,
                     bool* zero_click_flag = nullptr);
diff::Var loss_ctr(diff::Tape& tape, diff::Var ctr_hat, const Labels& labels);
diff::Var loss_ctcvr(diff::Tape& tape, diff::Var ctcvr_hat, const Labels& labels);
diff::Var risk_ips(diff::Tape& tape, diff::Var ctr_hat, diff::Var cvr_hat,
                   const Labels& labels, const RiskConfig& config);
diff::Var risk_dr_err(diff::Tape& tape, diff::Var ctr_hat, diff::Var cvr_hat,
                      diff::Var imputed_error, const Labels& labels,
                      const RiskConfig& config);
diff::Var risk_dr_imp(diff::Tape& tape, diff::Var ctr_hat, diff::Var cvr_hat,
                      diff::Var imputed_error, const Labels& labels,
                      const RiskConfig& config);

struct ObjectiveTerms {
  diff::Var objective;
  diff::Var l_ctr;
  diff::Var l_cvr;    // the variant's CVR term; constant 0 when absent
  diff::Var l_ctcvr;  // constant 0 when the variant has no CTCVR term
  bool zero_click_batch = false;
};

/// Variant-dispatched training objective over one bound batch.
ObjectiveTerms objective(diff::Tape& tape, const model::BoundModel& bound,
                         const Labels& labels, const RiskConfig& config);

}  // namespace escm::risks
