// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/risks.hpp"

#include <cmath>

#include "escm/error.hpp"

namespace escm::risks {

namespace {

using diff::Tape;
using diff::Tensor;
using diff::Var;

Var clipped_propensity(Tape& tape, Var ctr_hat, const RiskConfig& config) {
  Var q = config.truncate_propensity_gradient ? tape.stop_gradient(ctr_hat)
                                              : ctr_hat;
  return tape.clamp_min(q, config.propensity_clip);
}

Var click_mask(Tape& tape, const Labels& labels) {
  return tape.constant(Tensor::from_vector(labels.click));
}

}  // namespace

Variant variant_from_string(const std::string& name) {
  if (name == "naive") return Variant::naive;
  if (name == "mtl_imp") return Variant::mtl_imp;
  if (name == "esmm") return Variant::esmm;
  if (name == "escm2_ips") return Variant::escm2_ips;
  if (name == "escm2_dr") return Variant::escm2_dr;
  throw ConfigError("unknown estimator variant '" + name + "'");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::naive: return "naive";
    case Variant::mtl_imp: return "mtl_imp";
    case Variant::esmm: return "esmm";
    case Variant::escm2_ips: return "escm2_ips";
    case Variant::escm2_dr: return "escm2_dr";
  }
  throw ConfigError("unknown estimator variant");
}

void RiskConfig::validate() const {
  if (!(lambda_c >= 0.0) || !std::isfinite(lambda_c)) {
    throw ConfigError("risk: lambda_c must be finite and >= 0");
  }
  if (!(lambda_g >= 0.0) || !std::isfinite(lambda_g)) {
    throw ConfigError("risk: lambda_g must be finite and >= 0");
  }
  if (!(propensity_clip > 0.0) || propensity_clip > 1.0) {
    throw ConfigError("risk: propensity_clip must lie in (0,1]");
  }
}

Labels Labels::from_rows(const std::vector<const data::Row*>& rows) {
  Labels l;
  l.click.reserve(rows.size());
  l.conversion.reserve(rows.size());
  for (const data::Row* row : rows) {
    l.click.push_back(static_cast<double>(row->click));
    l.conversion.push_back(static_cast<double>(row->conversion));
  }
  return l;
}

Labels Labels::from_dataset(const data::Dataset& dataset) {
  Labels l;
  l.click.reserve(dataset.rows.size());
  l.conversion.reserve(dataset.rows.size());
  for (const data::Row& row : dataset.rows) {
    l.click.push_back(static_cast<double>(row.click));
    l.conversion.push_back(static_cast<double>(row.conversion));
  }
  return l;
}

double bce(double label, double prediction) {
  double p = prediction;
  if (p < diff::kEpsilon) p = diff::kEpsilon;
  if (p > 1.0 - diff::kEpsilon) p = 1.0 - diff::kEpsilon;
  return -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
}

Var bce_vec(Tape& tape, Var predictions, const std::vector<double>& labels) {
  const std::size_t n = tape.value(predictions).numel();
  if (n != labels.size()) {
    throw DimensionError("bce_vec: prediction/label size mismatch");
  }
  Var p = tape.clamp_max(tape.clamp_min(predictions, diff::kEpsilon),
                         1.0 - diff::kEpsilon);
  Var one_minus_p = tape.add_const(tape.neg(p), 1.0);
  std::vector<double> inverse(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) inverse[i] = 1.0 - labels[i];
  Var pos = tape.mul(tape.constant(Tensor::from_vector(labels)), tape.log(p));
  Var neg = tape.mul(tape.constant(Tensor::from_vector(inverse)),
                     tape.log(one_minus_p));
  return tape.neg(tape.add(pos, neg));
}

Var loss_naive(Tape& tape, Var cvr_hat, const Labels& labels,
               bool* zero_click_flag) {
  if (labels.size() == 0) throw ContractError("loss_naive: empty batch");
  double clicked = 0.0;
  for (double o : labels.click) clicked += o;
  if (clicked == 0.0) {
    if (zero_click_flag != nullptr) *zero_click_flag = true;
    return tape.constant(Tensor::scalar(0.0));
  }
  if (zero_click_flag != nullptr) *zero_click_flag = false;
  Var delta = bce_vec(tape, cvr_hat, labels.conversion);
  Var clicked_sum = tape.sum(tape.mul(click_mask(tape, labels), delta));
  return tape.mul_const(clicked_sum, 1.0 / clicked);
}

Var loss_ctr(Tape& tape, Var ctr_hat, const Labels& labels) {
  if (labels.size() == 0) throw ContractError("loss_ctr: empty batch");
  return tape.mean(bce_vec(tape, ctr_hat, labels.click));
}

Var loss_ctcvr(Tape& tape, Var ctcvr_hat, const Labels& labels) {
  if (labels.size() == 0) throw ContractError("loss_ctcvr: empty batch");
  std::vector<double> joint(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    joint[i] = labels.click[i] * labels.conversion[i];
  }
  return tape.mean(bce_vec(tape, ctcvr_hat, joint));
}

Var risk_ips(Tape& tape, Var ctr_hat, Var cvr_hat, const Labels& labels,
             const RiskConfig& config) {
  if (labels.size() == 0) throw ContractError("risk_ips: empty batch");
  config.validate();
  Var delta = bce_vec(tape, cvr_hat, labels.conversion);
  Var numer = tape.mul(click_mask(tape, labels), delta);
  Var weighted = tape.div(numer, clipped_propensity(tape, ctr_hat, config));
  return tape.mean(weighted);
}

Var risk_dr_err(Tape& tape, Var ctr_hat, Var cvr_hat, Var imputed_error,
                const Labels& labels, const RiskConfig& config) {
  if (labels.size() == 0) throw ContractError("risk_dr_err: empty batch");
  config.validate();
  Var delta = bce_vec(tape, cvr_hat, labels.conversion);
  Var deviation = tape.sub(delta, imputed_error);
  Var corrected = tape.div(tape.mul(click_mask(tape, labels), deviation),
                           clipped_propensity(tape, ctr_hat, config));
  return tape.mean(tape.add(imputed_error, corrected));
}

Var risk_dr_imp(Tape& tape, Var ctr_hat, Var cvr_hat, Var imputed_error,
                const Labels& labels, const RiskConfig& config) {
  if (labels.size() == 0) throw ContractError("risk_dr_imp: empty batch");
  config.validate();
  Var delta = bce_vec(tape, cvr_hat, labels.conversion);
  // The imputation tower learns toward the observed error; unless explicitly
  // enabled, the error itself is held fixed so this term cannot drag the CVR
  // tower toward its own student.
  Var target = config.imputation_updates_cvr ? delta : tape.stop_gradient(delta);
  Var squared = tape.square(tape.sub(target, imputed_error));
  Var weighted = tape.div(tape.mul(click_mask(tape, labels), squared),
                          clipped_propensity(tape, ctr_hat, config));
  return tape.mean(weighted);
}

ObjectiveTerms objective(Tape& tape, const model::BoundModel& bound,
                         const Labels& labels, const RiskConfig& config) {
  config.validate();
  if (labels.size() == 0) throw ContractError("objective: empty batch");
  ObjectiveTerms terms;
  terms.l_ctr = loss_ctr(tape, bound.ctr_hat, labels);
  terms.l_cvr = tape.constant(Tensor::scalar(0.0));
  terms.l_ctcvr = tape.constant(Tensor::scalar(0.0));

  switch (config.variant) {
    case Variant::naive:
      terms.l_cvr =
          loss_naive(tape, bound.cvr_hat, labels, &terms.zero_click_batch);
      terms.objective =
          tape.add(terms.l_ctr, tape.mul_const(terms.l_cvr, config.lambda_c));
      return terms;
    case Variant::mtl_imp:
      // Unclicked rows enter as negatives: plain BCE over the whole batch.
      terms.l_cvr = tape.mean(bce_vec(tape, bound.cvr_hat, labels.conversion));
      terms.objective =
          tape.add(terms.l_ctr, tape.mul_const(terms.l_cvr, config.lambda_c));
      return terms;
    case Variant::esmm:
      terms.l_ctcvr = loss_ctcvr(tape, bound.ctcvr_hat, labels);
      terms.objective =
          tape.add(terms.l_ctr, tape.mul_const(terms.l_ctcvr, config.lambda_g));
      return terms;
    case Variant::escm2_ips: {
      terms.l_cvr = risk_ips(tape, bound.ctr_hat, bound.cvr_hat, labels, config);
      terms.l_ctcvr = loss_ctcvr(tape, bound.ctcvr_hat, labels);
      Var counterfactual = tape.mul_const(terms.l_cvr, config.lambda_c);
      Var global = tape.mul_const(terms.l_ctcvr, config.lambda_g);
      terms.objective = tape.add(tape.add(terms.l_ctr, counterfactual), global);
      return terms;
    }
    case Variant::escm2_dr: {
      if (!bound.has_imputation) {
        throw ContractError("escm2_dr objective needs the imputation tower");
      }
      Var err = risk_dr_err(tape, bound.ctr_hat, bound.cvr_hat,
                            bound.imputed_error, labels, config);
      Var imp = risk_dr_imp(tape, bound.ctr_hat, bound.cvr_hat,
                            bound.imputed_error, labels, config);
      terms.l_cvr = tape.add(err, imp);
      terms.l_ctcvr = loss_ctcvr(tape, bound.ctcvr_hat, labels);
      Var counterfactual = tape.mul_const(terms.l_cvr, config.lambda_c);
      Var global = tape.mul_const(terms.l_ctcvr, config.lambda_g);
      terms.objective = tape.add(tape.add(terms.l_ctr, counterfactual), global);
      return terms;
    }
  }
  throw ConfigError("objective: unknown variant");
}

}  // namespace escm::risks
