// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "escm/error.hpp"
#include "escm/risks.hpp"
#include "escm/synth.hpp"
#include "test_support.hpp"

using namespace escm;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

const double kLn2 = std::log(2.0);

risks::Labels labels_of(std::vector<double> click, std::vector<double> conv) {
  risks::Labels l;
  l.click = std::move(click);
  l.conversion = std::move(conv);
  return l;
}

double value_of(Tape& tape, Var v) { return tape.value(v).v[0]; }

}  // namespace

TEST_CASE("scalar bce values") {
  CHECK(risks::bce(1.0, 0.5) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(risks::bce(0.0, 0.5) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(risks::bce(1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(risks::bce(1.0, 1.0) > 0.0);  // epsilon clamp keeps it finite, positive
  CHECK(std::isfinite(risks::bce(1.0, 0.0)));
}

TEST_CASE("loss_naive averages over clicked rows only") {
  Tape tape;
  Var preds = tape.constant(Tensor::from_vector({0.5, 0.9, 0.2, 0.7}));
  const risks::Labels labels = labels_of({1, 0, 1, 0}, {1, 0, 0, 0});
  const double expected = (risks::bce(1, 0.5) + risks::bce(0, 0.2)) / 2.0;
  CHECK(value_of(tape, risks::loss_naive(tape, preds, labels)) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss_naive on a single clicked row is ln 2 at 0.5") {
  Tape tape;
  Var preds = tape.constant(Tensor::from_vector({0.5}));
  CHECK(value_of(tape, risks::loss_naive(tape, preds, labels_of({1}, {1}))) ==
        doctest::Approx(kLn2));
}

TEST_CASE("loss_naive flags click-free batches and contributes zero") {
  Tape tape;
  Var preds = tape.constant(Tensor::from_vector({0.5, 0.6}));
  bool flag = false;
  const double v =
      value_of(tape, risks::loss_naive(tape, preds, labels_of({0, 0}, {0, 0}),
                                       &flag));
  CHECK(v == 0.0);
  CHECK(flag);
}

TEST_CASE("loss_ctr matches analytic cases and a row enumeration") {
  Tape tape;
  Var half = tape.constant(Tensor::from_vector({0.5, 0.5, 0.5}));
  CHECK(value_of(tape, risks::loss_ctr(tape, half, labels_of({1, 0, 1}, {0, 0, 0}))) ==
        doctest::Approx(kLn2));

  // matching predictions give a near-zero loss
  Tape tape2;
  Var matched = tape2.constant(Tensor::from_vector({1.0 - 1e-9, 1e-9}));
  CHECK(value_of(tape2, risks::loss_ctr(tape2, matched, labels_of({1, 0}, {0, 0}))) <
        1e-6);

  Tape tape3;
  const std::vector<double> p = {0.3, 0.8, 0.45, 0.12};
  const std::vector<double> o = {0, 1, 1, 0};
  Var preds = tape3.constant(Tensor::from_vector(p));
  double mean = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) mean += risks::bce(o[i], p[i]);
  mean /= 4.0;
  CHECK(value_of(tape3, risks::loss_ctr(tape3, preds, labels_of(o, {0, 0, 0, 0}))) ==
        doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("loss_ctcvr uses the joint label and the product prediction") {
  Tape tape;
  Var prod = tape.constant(Tensor::from_vector({0.25, 0.25}));
  const double expected = -std::log(0.75);
  CHECK(value_of(tape, risks::loss_ctcvr(tape, prod, labels_of({1, 0}, {0, 0}))) ==
        doctest::Approx(expected).epsilon(1e-9));

  Tape tape2;
  const std::vector<double> pred = {0.2, 0.9, 0.05};
  const std::vector<double> o = {1, 1, 0};
  const std::vector<double> r = {0, 1, 0};
  Var preds = tape2.constant(Tensor::from_vector(pred));
  double mean = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mean += risks::bce(o[i] * r[i], pred[i]);
  }
  mean /= 3.0;
  CHECK(value_of(tape2, risks::loss_ctcvr(tape2, preds, labels_of(o, r))) ==
        doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("risk_ips single-row analytic value") {
  risks::RiskConfig config;
  config.propensity_clip = 0.1;
  Tape tape;
  Var ctr = tape.constant(Tensor::from_vector({0.5}));
  Var cvr = tape.constant(Tensor::from_vector({0.5}));
  const double v = value_of(
      tape, risks::risk_ips(tape, ctr, cvr, labels_of({1}, {1}), config));
  CHECK(v == doctest::Approx(2.0 * kLn2).epsilon(1e-12));
}

TEST_CASE("propensity clip engages below the threshold") {
  risks::RiskConfig config;
  config.propensity_clip = 0.1;
  Tape tape;
  Var ctr = tape.constant(Tensor::from_vector({0.01}));
  Var cvr = tape.constant(Tensor::from_vector({0.5}));
  const double v = value_of(
      tape, risks::risk_ips(tape, ctr, cvr, labels_of({1}, {1}), config));
  CHECK(v == doctest::Approx(10.0 * kLn2).epsilon(1e-12));  // weight exactly 10
}

TEST_CASE("raising the clip never increases a row's weight") {
  const std::vector<double> propensities = {0.02, 0.08, 0.15, 0.5, 0.9};
  for (double low_clip : {0.01, 0.05, 0.1}) {
    const double high_clip = low_clip * 2.0;
    for (double q : propensities) {
      const double w_low = 1.0 / std::max(q, low_clip);
      const double w_high = 1.0 / std::max(q, high_clip);
      CHECK(w_high <= w_low);
    }
  }
  // and through the implementation itself
  risks::RiskConfig low, high;
  low.propensity_clip = 0.05;
  high.propensity_clip = 0.2;
  Tape tl, th;
  Var ctr_l = tl.constant(Tensor::from_vector(propensities));
  Var cvr_l = tl.constant(Tensor::from_vector({0.5, 0.5, 0.5, 0.5, 0.5}));
  Var ctr_h = th.constant(Tensor::from_vector(propensities));
  Var cvr_h = th.constant(Tensor::from_vector({0.5, 0.5, 0.5, 0.5, 0.5}));
  const risks::Labels all_clicked =
      labels_of({1, 1, 1, 1, 1}, {1, 0, 1, 0, 1});
  CHECK(value_of(th, risks::risk_ips(th, ctr_h, cvr_h, all_clicked, high)) <=
        value_of(tl, risks::risk_ips(tl, ctr_l, cvr_l, all_clicked, low)));
}

TEST_CASE("with certain clicks risk_ips collapses to loss_naive") {
  risks::RiskConfig config;
  config.propensity_clip = 0.1;
  Tape tape;
  const std::vector<double> preds = {0.3, 0.6, 0.8};
  Var ctr = tape.constant(Tensor::from_vector({1.0, 1.0, 1.0}));
  Var cvr = tape.constant(Tensor::from_vector(preds));
  const risks::Labels labels = labels_of({1, 1, 1}, {0, 1, 1});
  const double ips =
      value_of(tape, risks::risk_ips(tape, ctr, cvr, labels, config));
  Tape tape2;
  Var cvr2 = tape2.constant(Tensor::from_vector(preds));
  const double naive = value_of(tape2, risks::loss_naive(tape2, cvr2, labels));
  CHECK(ips == doctest::Approx(naive).epsilon(1e-12));
  double mean_delta = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mean_delta += risks::bce(labels.conversion[i], preds[i]);
  }
  CHECK(ips == doctest::Approx(mean_delta / 3.0).epsilon(1e-12));
}

TEST_CASE("risk_dr_err single-row analytic value") {
  risks::RiskConfig config;
  Tape tape;
  Var ctr = tape.constant(Tensor::from_vector({0.5}));
  // delta = bce(1, pred); choose pred so delta = 0.8
  const double pred = std::exp(-0.8);
  Var cvr = tape.constant(Tensor::from_vector({pred}));
  Var imputed = tape.constant(Tensor::from_vector({0.3}));
  const double v = value_of(
      tape, risks::risk_dr_err(tape, ctr, cvr, imputed, labels_of({1}, {1}),
                               config));
  CHECK(v == doctest::Approx(0.3 + (0.8 - 0.3) / 0.5).epsilon(1e-9));
}

TEST_CASE("perfect imputation makes risk_dr_err ignore the propensity") {
  risks::RiskConfig config;
  config.propensity_clip = 1e-6;
  const std::vector<double> preds = {0.4, 0.7, 0.2, 0.9};
  const risks::Labels labels = labels_of({1, 0, 1, 0}, {1, 0, 0, 0});
  std::vector<double> delta(4);
  for (std::size_t i = 0; i < 4; ++i) {
    delta[i] = risks::bce(labels.conversion[i], preds[i]);
  }
  for (const std::vector<double>& propensities :
       {std::vector<double>{0.5, 0.5, 0.5, 0.5},
        std::vector<double>{0.9, 0.01, 0.3, 0.6}}) {
    Tape tape;
    Var ctr = tape.constant(Tensor::from_vector(propensities));
    Var cvr = tape.constant(Tensor::from_vector(preds));
    Var imputed = tape.constant(Tensor::from_vector(delta));
    const double v = value_of(
        tape, risks::risk_dr_err(tape, ctr, cvr, imputed, labels, config));
    const double mean_delta = (delta[0] + delta[1] + delta[2] + delta[3]) / 4.0;
    CHECK(v == doctest::Approx(mean_delta).epsilon(1e-12));
  }
}

TEST_CASE("risk_dr_imp analytic cases") {
  risks::RiskConfig config;
  // e == 0 -> 0
  {
    Tape tape;
    const std::vector<double> preds = {0.4, 0.8};
    const risks::Labels labels = labels_of({1, 1}, {0, 1});
    std::vector<double> delta(2);
    for (std::size_t i = 0; i < 2; ++i) {
      delta[i] = risks::bce(labels.conversion[i], preds[i]);
    }
    Tape t;
    Var ctr = t.constant(Tensor::from_vector({0.5, 0.5}));
    Var cvr = t.constant(Tensor::from_vector(preds));
    Var imputed = t.constant(Tensor::from_vector(delta));
    CHECK(value_of(t, risks::risk_dr_imp(t, ctr, cvr, imputed, labels, config)) ==
          doctest::Approx(0.0));
  }
  // single row o=1, e=0.5, q=0.5 -> 0.25/0.5 = 0.5
  {
    Tape tape;
    Var ctr = tape.constant(Tensor::from_vector({0.5}));
    const double pred = std::exp(-0.8);  // delta = 0.8
    Var cvr = tape.constant(Tensor::from_vector({pred}));
    Var imputed = tape.constant(Tensor::from_vector({0.3}));
    CHECK(value_of(tape, risks::risk_dr_imp(tape, ctr, cvr, imputed,
                                            labels_of({1}, {1}), config)) ==
          doctest::Approx(0.5).epsilon(1e-9));
  }
  // all unclicked -> 0
  {
    Tape tape;
    Var ctr = tape.constant(Tensor::from_vector({0.5, 0.9}));
    Var cvr = tape.constant(Tensor::from_vector({0.4, 0.2}));
    Var imputed = tape.constant(Tensor::from_vector({1.0, 2.0}));
    CHECK(value_of(tape, risks::risk_dr_imp(tape, ctr, cvr, imputed,
                                            labels_of({0, 0}, {0, 0}), config)) ==
          0.0);
  }
}

TEST_CASE("objective dispatch: lambda_c = 0 turns the ips variant into esmm") {
  const auto inst = testsupport::make_fd_instance(77);
  risks::RiskConfig ips_config;
  ips_config.variant = risks::Variant::escm2_ips;
  ips_config.lambda_c = 0.0;
  ips_config.lambda_g = 1.0;
  risks::RiskConfig esmm_config = ips_config;
  esmm_config.variant = risks::Variant::esmm;

  Tape t1;
  auto bound1 = model::bind_forward(t1, inst.params, inst.ids, false);
  const double v_ips =
      value_of(t1, risks::objective(t1, bound1, inst.labels, ips_config).objective);
  Tape t2;
  auto bound2 = model::bind_forward(t2, inst.params, inst.ids, false);
  const double v_esmm =
      value_of(t2, risks::objective(t2, bound2, inst.labels, esmm_config).objective);
  CHECK(v_ips == doctest::Approx(v_esmm).epsilon(1e-14));
}

TEST_CASE("objective dispatch: lambda_g = 0 leaves the multi-task ips baseline") {
  const auto inst = testsupport::make_fd_instance(79);
  risks::RiskConfig config;
  config.variant = risks::Variant::escm2_ips;
  config.lambda_c = 0.1;
  config.lambda_g = 0.0;
  Tape tape;
  auto bound = model::bind_forward(tape, inst.params, inst.ids, false);
  auto terms = risks::objective(tape, bound, inst.labels, config);
  const double expected =
      value_of(tape, terms.l_ctr) + 0.1 * value_of(tape, terms.l_cvr);
  CHECK(value_of(tape, terms.objective) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mtl_imp treats unclicked rows as negatives over the whole batch") {
  const auto inst = testsupport::make_fd_instance(81);
  risks::RiskConfig config;
  config.variant = risks::Variant::mtl_imp;
  config.lambda_c = 1.0;
  Tape tape;
  auto bound = model::bind_forward(tape, inst.params, inst.ids, false);
  auto terms = risks::objective(tape, bound, inst.labels, config);
  const auto& cvr_hat = tape.value(bound.cvr_hat).v;
  double mean = 0.0;
  for (std::size_t i = 0; i < cvr_hat.size(); ++i) {
    mean += risks::bce(inst.labels.conversion[i], cvr_hat[i]);
  }
  mean /= static_cast<double>(cvr_hat.size());
  CHECK(value_of(tape, terms.l_cvr) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("default risk weights follow the training protocol") {
  const risks::RiskConfig config;
  CHECK(config.lambda_g == 1.0);
  CHECK(config.lambda_c == 0.1);
  CHECK(config.propensity_clip == 0.1);
  CHECK(config.truncate_propensity_gradient);
}

TEST_CASE("gradient truncation zeroes the ctr-tower gradient of both risks") {
  const auto inst = testsupport::make_fd_instance(83);
  risks::RiskConfig config;
  config.truncate_propensity_gradient = true;
  config.propensity_clip = 1e-3;

  for (bool dr : {false, true}) {
    Tape tape;
    auto bound = model::bind_forward(tape, inst.params, inst.ids, dr);
    Var risk = dr ? risks::risk_dr_err(tape, bound.ctr_hat, bound.cvr_hat,
                                       bound.imputed_error, inst.labels, config)
                  : risks::risk_ips(tape, bound.ctr_hat, bound.cvr_hat,
                                    inst.labels, config);
    tape.backward(risk);
    for (const auto& [name, var] : bound.params) {
      if (name.rfind("ctr.", 0) != 0) continue;
      for (double g : tape.grad(var).v) CHECK(g == 0.0);
    }
    // while the cvr tower is still being trained
    double cvr_norm = 0.0;
    for (const auto& [name, var] : bound.params) {
      if (name.rfind("cvr.", 0) != 0) continue;
      for (double g : tape.grad(var).v) cvr_norm += g * g;
    }
    CHECK(cvr_norm > 0.0);
  }

  // and L_CTR alone does reach the ctr tower
  Tape tape;
  auto bound = model::bind_forward(tape, inst.params, inst.ids, false);
  tape.backward(risks::loss_ctr(tape, bound.ctr_hat, inst.labels));
  double ctr_norm = 0.0;
  for (const auto& [name, var] : bound.params) {
    if (name.rfind("ctr.", 0) != 0) continue;
    for (double g : tape.grad(var).v) ctr_norm += g * g;
  }
  CHECK(ctr_norm > 0.0);
}

TEST_CASE("imputation loss does not reach the cvr tower unless asked to") {
  const auto inst = testsupport::make_fd_instance(85);
  risks::RiskConfig config;
  config.imputation_updates_cvr = false;
  Tape tape;
  auto bound = model::bind_forward(tape, inst.params, inst.ids, true);
  tape.backward(risks::risk_dr_imp(tape, bound.ctr_hat, bound.cvr_hat,
                                   bound.imputed_error, inst.labels, config));
  for (const auto& [name, var] : bound.params) {
    if (name.rfind("cvr.", 0) != 0) continue;
    for (double g : tape.grad(var).v) CHECK(g == 0.0);
  }
  double imp_norm = 0.0;
  for (const auto& [name, var] : bound.params) {
    if (name.rfind("imp.", 0) != 0) continue;
    for (double g : tape.grad(var).v) imp_norm += g * g;
  }
  CHECK(imp_norm > 0.0);
}

TEST_CASE("Monte-Carlo: risk_ips with true propensities is unbiased for the ideal risk") {
  synth::WorldConfig world_config;
  world_config.num_users = 60;
  world_config.num_items = 50;
  world_config.target_ctr = 0.08;
  world_config.confound_strength = 1.5;
  const synth::SyntheticWorld world = synth::generate_world(world_config, 91);
  const synth::SampledData base =
      synth::sample_dataset(world, world.num_pairs(), 93);

  std::vector<double> preds(world.num_pairs());
  rng::Stream stream(95);
  for (double& p : preds) p = 0.05 + 0.9 * stream.next_unit();
  const double ideal = synth::oracle_ideal_risk(preds, world, base.side);

  risks::RiskConfig config;
  config.propensity_clip = 1e-6;  // below min(true_ctr): the clip must not bind

  const std::size_t resamples = 220;
  std::vector<double> samples;
  samples.reserve(resamples);
  for (std::size_t k = 0; k < resamples; ++k) {
    const data::Dataset ds = synth::resample_clicks(world, base.side, 1000 + k);
    std::vector<double> q(ds.rows.size()), p(ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
      q[i] = world.true_ctr[ds.rows[i].pair_id];
      p[i] = preds[ds.rows[i].pair_id];
    }
    Tape tape;
    Var ctr = tape.constant(Tensor::from_vector(q));
    Var cvr = tape.constant(Tensor::from_vector(p));
    samples.push_back(value_of(
        tape, risks::risk_ips(tape, ctr, cvr,
                              risks::Labels::from_dataset(ds), config)));
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(samples.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(samples.size()));
  CHECK(std::fabs(mean - ideal) < 3.0 * se + 1e-9);
}

TEST_CASE("Monte-Carlo: risk_dr_err is doubly robust") {
  synth::WorldConfig world_config;
  world_config.num_users = 60;
  world_config.num_items = 50;
  world_config.target_ctr = 0.08;
  world_config.confound_strength = 1.5;
  const synth::SyntheticWorld world = synth::generate_world(world_config, 101);
  const synth::SampledData base =
      synth::sample_dataset(world, world.num_pairs(), 103);

  std::vector<double> preds(world.num_pairs());
  rng::Stream stream(105);
  for (double& p : preds) p = 0.05 + 0.9 * stream.next_unit();
  const double ideal = synth::oracle_ideal_risk(preds, world, base.side);

  risks::RiskConfig config;
  config.propensity_clip = 1e-6;

  // Regime (a): true propensities, junk imputation.
  // Regime (b): corrupted propensities, perfect imputation.
  for (int regime : {0, 1}) {
    std::vector<double> samples;
    rng::Stream corrupt(107);
    for (std::size_t k = 0; k < 220; ++k) {
      const data::Dataset ds = synth::resample_clicks(world, base.side, 2000 + k);
      std::vector<double> q(ds.rows.size()), p(ds.rows.size()), imp(ds.rows.size());
      for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const std::uint64_t pair = ds.rows[i].pair_id;
        p[i] = preds[pair];
        if (regime == 0) {
          q[i] = world.true_ctr[pair];
          imp[i] = 2.0 * corrupt.fork(pair).next_unit();  // junk, frozen per pair
        } else {
          rng::Stream s = corrupt.fork(pair);
          q[i] = std::min(1.0, std::max(1e-6, world.true_ctr[pair] *
                                                  (0.5 + 1.5 * s.next_unit())));
          // Perfect imputation = the error against the counterfactual label.
          // For clicked rows the observed label coincides with it, so the
          // correction term vanishes and the first term is the ideal risk.
          imp[i] = risks::bce(base.side.r_counterfactual[i], p[i]);
        }
      }
      Tape tape;
      Var ctr = tape.constant(Tensor::from_vector(q));
      Var cvr = tape.constant(Tensor::from_vector(p));
      Var imputed = tape.constant(Tensor::from_vector(imp));
      samples.push_back(value_of(
          tape, risks::risk_dr_err(tape, ctr, cvr, imputed,
                                   risks::Labels::from_dataset(ds), config)));
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(samples.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(samples.size()));
    INFO("regime ", regime);
    CHECK(std::fabs(mean - ideal) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("objective rejects an unclean config") {
  risks::RiskConfig config;
  config.lambda_c = -1.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = risks::RiskConfig{};
  config.propensity_clip = 0.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  CHECK_THROWS_AS(risks::variant_from_string("nope"), ConfigError);
}
