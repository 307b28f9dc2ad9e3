// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, kept independent of the implementation paths they check:
// central finite differences for gradients, O(n^2) pairwise AUC, exhaustive
// threshold sweeps for KS and PR metrics, and small random instances.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "escm/metrics.hpp"
#include "escm/model.hpp"
#include "escm/risks.hpp"
#include "escm/rng.hpp"

namespace escm::testsupport {

// ---------------------------------------------------------------------------
// Random small model instances for gradient checks
// ---------------------------------------------------------------------------

struct FdInstance {
  model::ModelParams params;
  std::vector<std::vector<std::uint32_t>> ids;
  risks::Labels labels;
};

enum class LossKind {
  naive,
  ctr,
  ctcvr,
  ips,
  dr_err,
  dr_imp,
  obj_naive,
  obj_mtl_imp,
  obj_esmm,
  obj_ips,
  obj_dr
};

inline const std::vector<LossKind>& all_loss_kinds() {
  static const std::vector<LossKind> kinds = {
      LossKind::naive,  LossKind::ctr,      LossKind::ctcvr,
      LossKind::ips,    LossKind::dr_err,   LossKind::dr_imp,
      LossKind::obj_naive, LossKind::obj_mtl_imp, LossKind::obj_esmm,
      LossKind::obj_ips, LossKind::obj_dr};
  return kinds;
}

inline std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::naive: return "loss_naive";
    case LossKind::ctr: return "loss_ctr";
    case LossKind::ctcvr: return "loss_ctcvr";
    case LossKind::ips: return "risk_ips";
    case LossKind::dr_err: return "risk_dr_err";
    case LossKind::dr_imp: return "risk_dr_imp";
    case LossKind::obj_naive: return "objective(naive)";
    case LossKind::obj_mtl_imp: return "objective(mtl_imp)";
    case LossKind::obj_esmm: return "objective(esmm)";
    case LossKind::obj_ips: return "objective(escm2_ips)";
    case LossKind::obj_dr: return "objective(escm2_dr)";
  }
  return "?";
}

inline FdInstance make_fd_instance(std::uint64_t seed) {
  rng::Stream stream(seed);
  model::ModelConfig config;
  config.num_feature_categories = 12;
  config.embed_dim = 3;
  config.tower_hidden = {4, 3};
  FdInstance inst;
  inst.params = model::init_params(config, stream.next_u64());
  // Jitter every entry (biases init to zero) so no relu/clamp kink sits at
  // exactly the evaluation point; finite differences need smoothness there.
  for (diff::Tensor& t : inst.params.tensors) {
    for (double& v : t.v) v += (stream.next_unit() - 0.5) * 0.6;
  }

  const std::size_t batch = 2 + stream.next_below(5);
  bool any_click = false;
  for (std::size_t r = 0; r < batch; ++r) {
    std::vector<std::uint32_t> row_ids;
    const std::size_t k = 1 + stream.next_below(3);
    for (std::size_t j = 0; j < k; ++j) {
      row_ids.push_back(static_cast<std::uint32_t>(
          stream.next_below(config.num_feature_categories)));
    }
    inst.ids.push_back(std::move(row_ids));
    const double click = stream.next_unit() < 0.6 ? 1.0 : 0.0;
    const double conversion =
        click == 1.0 && stream.next_unit() < 0.5 ? 1.0 : 0.0;
    inst.labels.click.push_back(click);
    inst.labels.conversion.push_back(conversion);
    any_click = any_click || click == 1.0;
  }
  if (!any_click) {
    inst.labels.click[0] = 1.0;  // keep the click-conditioned losses non-trivial
  }
  return inst;
}

/// A risk config with full gradient flow, so analytic gradients are
/// comparable with finite differences (stop-gradient intentionally breaks
/// that equality and is tested by exact-zero checks instead).
inline risks::RiskConfig fd_risk_config(risks::Variant variant) {
  risks::RiskConfig config;
  config.variant = variant;
  config.truncate_propensity_gradient = false;
  config.imputation_updates_cvr = true;
  config.propensity_clip = 1e-3;  // keep denominators off the clip kink
  return config;
}

struct BuiltLoss {
  model::BoundModel bound;
  diff::Var loss;
};

inline BuiltLoss build_loss(diff::Tape& tape, const FdInstance& inst,
                            LossKind kind) {
  const bool needs_imp = kind == LossKind::dr_err || kind == LossKind::dr_imp ||
                         kind == LossKind::obj_dr;
  BuiltLoss built;
  built.bound = model::bind_forward(tape, inst.params, inst.ids, needs_imp);
  const model::BoundModel& b = built.bound;
  switch (kind) {
    case LossKind::naive:
      built.loss = risks::loss_naive(tape, b.cvr_hat, inst.labels);
      break;
    case LossKind::ctr:
      built.loss = risks::loss_ctr(tape, b.ctr_hat, inst.labels);
      break;
    case LossKind::ctcvr:
      built.loss = risks::loss_ctcvr(tape, b.ctcvr_hat, inst.labels);
      break;
    case LossKind::ips:
      built.loss = risks::risk_ips(tape, b.ctr_hat, b.cvr_hat, inst.labels,
                                   fd_risk_config(risks::Variant::escm2_ips));
      break;
    case LossKind::dr_err:
      built.loss =
          risks::risk_dr_err(tape, b.ctr_hat, b.cvr_hat, b.imputed_error,
                             inst.labels, fd_risk_config(risks::Variant::escm2_dr));
      break;
    case LossKind::dr_imp:
      built.loss =
          risks::risk_dr_imp(tape, b.ctr_hat, b.cvr_hat, b.imputed_error,
                             inst.labels, fd_risk_config(risks::Variant::escm2_dr));
      break;
    case LossKind::obj_naive:
      built.loss = risks::objective(tape, b, inst.labels,
                                    fd_risk_config(risks::Variant::naive))
                       .objective;
      break;
    case LossKind::obj_mtl_imp:
      built.loss = risks::objective(tape, b, inst.labels,
                                    fd_risk_config(risks::Variant::mtl_imp))
                       .objective;
      break;
    case LossKind::obj_esmm:
      built.loss = risks::objective(tape, b, inst.labels,
                                    fd_risk_config(risks::Variant::esmm))
                       .objective;
      break;
    case LossKind::obj_ips:
      built.loss = risks::objective(tape, b, inst.labels,
                                    fd_risk_config(risks::Variant::escm2_ips))
                       .objective;
      break;
    case LossKind::obj_dr:
      built.loss = risks::objective(tape, b, inst.labels,
                                    fd_risk_config(risks::Variant::escm2_dr))
                       .objective;
      break;
  }
  return built;
}

inline double eval_loss(const FdInstance& inst, LossKind kind) {
  diff::Tape tape;
  return tape.value(build_loss(tape, inst, kind).loss).v[0];
}

/// Max over parameter entries of the relative error between the analytic
/// gradient and the central finite difference.
inline double fd_max_rel_error(const FdInstance& inst, LossKind kind,
                               double step = 1e-5) {
  diff::Tape tape;
  const BuiltLoss built = build_loss(tape, inst, kind);
  tape.backward(built.loss);

  double worst = 0.0;
  FdInstance perturbed = inst;
  for (std::size_t t = 0; t < inst.params.tensors.size(); ++t) {
    const std::string& name = inst.params.names[t];
    auto it = built.bound.params.find(name);
    if (it == built.bound.params.end()) continue;  // tower not built
    const diff::Tensor& analytic = tape.grad(it->second);
    for (std::size_t k = 0; k < analytic.v.size(); ++k) {
      double& entry = perturbed.params.tensors[t].v[k];
      const double saved = entry;
      entry = saved + step;
      const double up = eval_loss(perturbed, kind);
      entry = saved - step;
      const double down = eval_loss(perturbed, kind);
      entry = saved;
      const double fd = (up - down) / (2.0 * step);
      const double denom =
          std::max({std::fabs(fd), std::fabs(analytic.v[k]), 1e-6});
      worst = std::max(worst, std::fabs(fd - analytic.v[k]) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Brute-force metric oracles
// ---------------------------------------------------------------------------

inline double auc_bruteforce(const metrics::ScoredSet& set) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!set.labels[i]) continue;
    ++n_pos;
    for (std::size_t j = 0; j < set.size(); ++j) {
      if (set.labels[j]) continue;
      if (set.scores[i] > set.scores[j]) {
        wins += 1.0;
      } else if (set.scores[i] == set.scores[j]) {
        wins += 0.5;
      }
    }
  }
  for (std::uint8_t l : set.labels) {
    if (!l) ++n_neg;
  }
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double ks_bruteforce(const metrics::ScoredSet& set) {
  double n_pos = 0.0, n_neg = 0.0;
  for (std::uint8_t l : set.labels) (l ? n_pos : n_neg) += 1.0;
  double best = 0.0;
  for (double threshold : set.scores) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.scores[i] >= threshold) {
        (set.labels[i] ? tp : fp) += 1.0;
      }
    }
    best = std::max(best, std::fabs(tp / n_pos - fp / n_neg));
  }
  return best;
}

inline metrics::PrBest pr_bruteforce(const metrics::ScoredSet& set) {
  double n_pos = 0.0;
  for (std::uint8_t l : set.labels) n_pos += l;
  std::vector<double> thresholds = set.scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  metrics::PrBest best;
  best.threshold = std::numeric_limits<double>::infinity();
  for (double threshold : thresholds) {  // descending; ties go to the last (lowest)
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.scores[i] >= threshold) {
        predicted += 1.0;
        if (set.labels[i]) tp += 1.0;
      }
    }
    const double precision = predicted > 0.0 ? tp / predicted : 0.0;
    const double recall = tp / n_pos;
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    if (f1 >= best.f1) {
      best.f1 = f1;
      best.recall = recall;
      best.threshold = threshold;
    }
  }
  return best;
}

inline metrics::ScoredSet random_scored_set(std::uint64_t seed,
                                            std::size_t max_n = 1000) {
  rng::Stream stream(seed);
  metrics::ScoredSet set;
  const std::size_t n = 2 + stream.next_below(max_n - 1);
  const bool discrete = stream.next_unit() < 0.4;  // force ties sometimes
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    double score = discrete
                       ? static_cast<double>(stream.next_below(8)) / 8.0
                       : stream.next_unit();
    const std::uint8_t label = stream.next_unit() < 0.35 ? 1 : 0;
    set.scores.push_back(score);
    set.labels.push_back(label);
    has_pos = has_pos || label == 1;
    has_neg = has_neg || label == 0;
  }
  if (!has_pos) set.labels[0] = 1;
  if (!has_neg) set.labels[set.labels.size() - 1] = 0;
  return set;
}

}  // namespace escm::testsupport
