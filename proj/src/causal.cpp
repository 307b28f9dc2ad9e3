// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/causal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <set>

#include "escm/error.hpp"
#include "escm/evaluate.hpp"
#include "escm/log.hpp"
#include "escm/pipeline.hpp"

namespace escm::causal {

double default_caliper(const std::vector<double>& propensities) {
  if (propensities.size() < 2) {
    throw ContractError("default_caliper: need at least two propensities");
  }
  std::vector<double> logits;
  logits.reserve(propensities.size());
  for (double p : propensities) {
    const double clamped = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    logits.push_back(std::log(clamped / (1.0 - clamped)));
  }
  double mean = 0.0;
  for (double l : logits) mean += l;
  mean /= static_cast<double>(logits.size());
  double var = 0.0;
  for (double l : logits) var += (l - mean) * (l - mean);
  var /= static_cast<double>(logits.size() - 1);
  return 0.2 * std::sqrt(var);
}

MatchedSample psm_match(const std::vector<double>& propensities,
                        const std::vector<std::uint8_t>& click_flags,
                        double caliper) {
  if (propensities.size() != click_flags.size()) {
    throw ContractError("psm_match: propensity/click size mismatch");
  }
  if (!(caliper > 0.0)) throw ContractError("psm_match: caliper must be > 0");

  std::vector<std::size_t> clicked;
  std::set<std::pair<double, std::size_t>> unclicked;  // sorted candidates
  for (std::size_t i = 0; i < click_flags.size(); ++i) {
    if (click_flags[i]) {
      clicked.push_back(i);
    } else {
      unclicked.emplace(propensities[i], i);
    }
  }
  if (clicked.empty() || unclicked.empty()) {
    throw ContractError("psm_match: need both clicked and unclicked rows");
  }

  std::stable_sort(clicked.begin(), clicked.end(),
                   [&](std::size_t a, std::size_t b) {
                     return propensities[a] > propensities[b];
                   });

  MatchedSample out;
  out.caliper = caliper;
  double closest_miss = std::numeric_limits<double>::infinity();
  for (std::size_t row : clicked) {
    if (unclicked.empty()) {
      out.unmatched_count += 1;
      continue;
    }
    const double p = propensities[row];
    auto right = unclicked.lower_bound({p, 0});
    // Candidates: first at or above p, and the one just below.
    const std::pair<double, std::size_t>* best = nullptr;
    double best_gap = std::numeric_limits<double>::infinity();
    if (right != unclicked.end()) {
      best = &*right;
      best_gap = std::fabs(right->first - p);
    }
    if (right != unclicked.begin()) {
      auto left = std::prev(right);
      const double gap = std::fabs(left->first - p);
      // Strict < keeps ties on the lower-propensity side deterministic.
      if (gap < best_gap) {
        best = &*left;
        best_gap = gap;
      }
    }
    if (best != nullptr && best_gap <= caliper) {
      out.pairs.emplace_back(row, best->second);
      unclicked.erase(*best);
    } else {
      out.unmatched_count += 1;
      closest_miss = std::min(closest_miss, best_gap);
    }
  }

  if (out.pairs.empty()) {
    std::string hint;
    if (std::isfinite(closest_miss)) {
      hint = "; the nearest unmatched gap was " + std::to_string(closest_miss) +
             " - try a caliper of at least " + std::to_string(closest_miss * 1.05);
    }
    throw UndefinedMetricError(
        "psm_match: no pairs within caliper " + std::to_string(caliper) + hint);
  }
  return out;
}

CausalStrengthReport causal_risk_ratio(const MatchedSample& matched,
                                       const std::vector<double>& outcomes) {
  if (matched.pairs.empty()) {
    throw ContractError("causal_risk_ratio: empty matched sample");
  }
  double clicked_sum = 0.0, unclicked_sum = 0.0;
  for (const auto& [clicked_row, unclicked_row] : matched.pairs) {
    if (clicked_row >= outcomes.size() || unclicked_row >= outcomes.size()) {
      throw ContractError("causal_risk_ratio: matched index outside outcomes");
    }
    clicked_sum += outcomes[clicked_row];
    unclicked_sum += outcomes[unclicked_row];
  }
  const double n = static_cast<double>(matched.pairs.size());
  const double denom = unclicked_sum / n;
  if (denom == 0.0) {
    throw UndefinedMetricError(
        "causal_risk_ratio: unclicked outcome mean is zero");
  }
  CausalStrengthReport report;
  report.crr = (clicked_sum / n) / denom;
  report.strength = std::fabs(report.crr - 1.0);
  report.matched_count = matched.pairs.size();
  return report;
}

std::vector<IebRow> ieb_report(const std::vector<IebEntry>& entries,
                               double reference) {
  if (entries.empty()) throw ContractError("ieb_report: no entries");
  std::vector<std::string> label_order;
  std::map<std::string, std::vector<double>> by_label;
  for (const IebEntry& e : entries) {
    if (by_label.find(e.label) == by_label.end()) label_order.push_back(e.label);
    by_label[e.label].push_back(e.mean_cvr_estimate);
  }
  std::vector<IebRow> rows;
  rows.reserve(label_order.size());
  for (const std::string& label : label_order) {
    const std::vector<double>& means = by_label[label];
    IebRow row;
    row.label = label;
    row.n_seeds = means.size();
    row.reference = reference;
    double acc = 0.0;
    for (double m : means) acc += m;
    row.mean_estimate = acc / static_cast<double>(means.size());
    row.bias = row.mean_estimate - reference;
    if (means.size() > 1) {
      double var = 0.0;
      for (double m : means) {
        var += (m - row.mean_estimate) * (m - row.mean_estimate);
      }
      row.std_across_seeds = std::sqrt(var / static_cast<double>(means.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

SweepParam sweep_param_from_string(const std::string& name) {
  if (name == "lambda_c") return SweepParam::lambda_c;
  if (name == "lambda_g") return SweepParam::lambda_g;
  throw ConfigError("unknown sweep parameter '" + name + "'");
}

std::string to_string(SweepParam param) {
  return param == SweepParam::lambda_c ? "lambda_c" : "lambda_g";
}

namespace {

SweepCell run_cell(const synth::SyntheticWorld& world,
                   const config::ExperimentConfig& base, SweepParam param,
                   double value, std::uint64_t seed) {
  SweepCell cell;
  cell.value = value;
  cell.seed = seed;
  try {
    config::ExperimentConfig cell_config = base;
    if (param == SweepParam::lambda_c) {
      cell_config.train.risk.lambda_c = value;
    } else {
      cell_config.train.risk.lambda_g = value;
    }
    trainer::TrainResult trained =
        pipeline::train_synthetic(world, cell_config, seed);
    if (trained.aborted) {
      throw NumericError("training aborted: " + trained.abort_reason);
    }
    const synth::SampledData test =
        pipeline::sample_test(world, cell_config.data, seed);
    const evaluate::EvalReport report =
        evaluate::evaluate_model(trained.params, test.dataset);
    cell.auc_cvr = report.cvr.auc;
    cell.ks_cvr = report.cvr.ks;
    cell.auc_ctcvr = report.ctcvr.auc;
    cell.ks_ctcvr = report.ctcvr.ks;
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    cell.auc_cvr = cell.ks_cvr = cell.auc_ctcvr = cell.ks_ctcvr = nan;
  }
  return cell;
}

}  // namespace

std::vector<SweepCell> sweep(SweepParam param, const std::vector<double>& grid,
                             const config::ExperimentConfig& base,
                             const std::vector<std::uint64_t>& seeds,
                             unsigned jobs) {
  if (grid.empty()) throw ContractError("sweep: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw ContractError("sweep: grid must be sorted ascending");
  }
  if (seeds.empty()) throw ContractError("sweep: no seeds");
  if (jobs == 0) jobs = 1;

  const synth::SyntheticWorld world =
      synth::generate_world(base.world, base.world_seed);

  struct Task {
    double value;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (double value : grid) {
    for (std::uint64_t seed : seeds) tasks.push_back({value, seed});
  }

  std::vector<SweepCell> cells(tasks.size());
  for (std::size_t begin = 0; begin < tasks.size(); begin += jobs) {
    const std::size_t end = std::min(begin + jobs, tasks.size());
    std::vector<std::future<SweepCell>> futures;
    futures.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return run_cell(world, base, param, tasks[i].value, tasks[i].seed);
      }));
    }
    for (std::size_t i = begin; i < end; ++i) {
      cells[i] = futures[i - begin].get();
      if (cells[i].failed) {
        log::warn("sweep cell (", to_string(param), "=", cells[i].value,
                  ", seed ", cells[i].seed, ") failed: ", cells[i].error);
      }
    }
  }
  return cells;
}

void export_sweep_csv(SweepParam param, const std::vector<SweepCell>& cells,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "param,value,seed,auc_cvr,ks_cvr,auc_ctcvr,ks_ctcvr\n";
  char line[256];
  const std::string name = to_string(param);
  for (const SweepCell& c : cells) {
    std::snprintf(line, sizeof(line), "%s,%.12g,%llu,%.12g,%.12g,%.12g,%.12g\n",
                  name.c_str(), c.value,
                  static_cast<unsigned long long>(c.seed), c.auc_cvr, c.ks_cvr,
                  c.auc_ctcvr, c.ks_ctcvr);
    out << line;
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace escm::causal
