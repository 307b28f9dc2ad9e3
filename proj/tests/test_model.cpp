// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "escm/error.hpp"
#include "escm/model.hpp"
#include "escm/rng.hpp"

using namespace escm;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig config;
  config.num_feature_categories = 20;
  config.embed_dim = 5;
  config.tower_hidden = {8, 4};
  return config;
}

std::vector<std::vector<std::uint32_t>> random_batch(std::size_t n,
                                                     std::size_t vocab,
                                                     std::uint64_t seed) {
  rng::Stream stream(seed);
  std::vector<std::vector<std::uint32_t>> ids(n);
  for (auto& row : ids) {
    const std::size_t k = 1 + stream.next_below(3);
    for (std::size_t j = 0; j < k; ++j) {
      row.push_back(static_cast<std::uint32_t>(stream.next_below(vocab)));
    }
  }
  return ids;
}

}  // namespace

TEST_CASE("init is deterministic per seed and respects Glorot bounds") {
  const model::ModelParams a = model::init_params(small_config(), 5);
  const model::ModelParams b = model::init_params(small_config(), 5);
  REQUIRE(a.names == b.names);
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].v == b.tensors[i].v);
  }
  const model::ModelParams c = model::init_params(small_config(), 6);
  CHECK(a.find("embedding").v != c.find("embedding").v);

  const auto& w = a.find("ctr.l0.w");
  const double bound = std::sqrt(6.0 / (5.0 + 8.0));
  for (double v : w.v) {
    CHECK(std::fabs(v) <= bound);
  }
  for (double v : a.find("ctr.l0.b").v) CHECK(v == 0.0);
}

TEST_CASE("default embedding width is five") {
  model::ModelConfig config;
  config.num_feature_categories = 3;
  CHECK(config.embed_dim == 5);
  const model::ModelParams params = model::init_params(config, 1);
  CHECK(params.find("embedding").shape ==
        std::vector<std::size_t>{3, 5});
}

TEST_CASE("tower outputs at init stay inside (0,1) and ctcvr is an exact product") {
  const model::ModelParams params = model::init_params(small_config(), 9);
  const auto ids = random_batch(64, 20, 11);
  const model::PredictionBatch preds = model::predict(params, ids, true);
  for (std::size_t i = 0; i < preds.ctr.size(); ++i) {
    CHECK(preds.ctr[i] > 0.0);
    CHECK(preds.ctr[i] < 1.0);
    CHECK(preds.cvr[i] > 0.0);
    CHECK(preds.cvr[i] < 1.0);
    CHECK(preds.ctcvr[i] == preds.ctr[i] * preds.cvr[i]);  // bitwise
    CHECK(preds.ctcvr[i] <= std::min(preds.ctr[i], preds.cvr[i]));
    CHECK(preds.imputed[i] >= 0.0);
  }
}

TEST_CASE("batch forward equals per-row forward") {
  const model::ModelParams params = model::init_params(small_config(), 13);
  const auto ids = random_batch(17, 20, 15);
  const model::PredictionBatch batch = model::predict(params, ids, true);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const model::PredictionBatch one = model::predict(params, {ids[i]}, true);
    CHECK(batch.ctr[i] == doctest::Approx(one.ctr[0]).epsilon(1e-14));
    CHECK(batch.cvr[i] == doctest::Approx(one.cvr[0]).epsilon(1e-14));
    CHECK(batch.ctcvr[i] == doctest::Approx(one.ctcvr[0]).epsilon(1e-14));
    CHECK(batch.imputed[i] == doctest::Approx(one.imputed[0]).epsilon(1e-14));
  }
}

TEST_CASE("forward validates feature ids") {
  const model::ModelParams params = model::init_params(small_config(), 17);
  diff::Tape tape;
  CHECK_THROWS_AS(model::bind_forward(tape, params, {{25}}, false),
                  ContractError);
  diff::Tape tape2;
  CHECK_THROWS_AS(
      model::bind_forward(tape2, params, {std::vector<std::uint32_t>{}}, false),
      ContractError);
  diff::Tape tape3;
  CHECK_THROWS_AS(model::bind_forward(
                      tape3, params, std::vector<std::vector<std::uint32_t>>{},
                      false),
                  ContractError);
}

TEST_CASE("perturbing one embedding row moves all three tower outputs") {
  model::ModelParams params = model::init_params(small_config(), 19);
  const std::vector<std::vector<std::uint32_t>> ids = {{3, 7}};
  const model::PredictionBatch before = model::predict(params, ids, true);
  auto& embedding = params.find("embedding");
  for (std::size_t k = 0; k < 5; ++k) embedding.v[3 * 5 + k] += 0.5;
  const model::PredictionBatch after = model::predict(params, ids, true);
  CHECK(before.ctr[0] != after.ctr[0]);
  CHECK(before.cvr[0] != after.cvr[0]);
  CHECK(before.imputed[0] != after.imputed[0]);

  // A row the pair does not use changes nothing.
  embedding.v[9 * 5] += 2.0;
  const model::PredictionBatch untouched = model::predict(params, ids, true);
  CHECK(untouched.ctr[0] == after.ctr[0]);
}

TEST_CASE("ctcvr gradient reaches the cvr tower whenever ctr_hat is positive") {
  const model::ModelParams params = model::init_params(small_config(), 23);
  const auto ids = random_batch(8, 20, 29);
  diff::Tape tape;
  const model::BoundModel bound = model::bind_forward(tape, params, ids, false);
  tape.backward(tape.sum(bound.ctcvr_hat));
  double norm = 0.0;
  for (const auto& [name, var] : bound.params) {
    if (name.rfind("cvr.", 0) != 0) continue;
    for (double g : tape.grad(var).v) norm += g * g;
  }
  CHECK(norm > 0.0);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const model::ModelParams params = model::init_params(small_config(), 31);
  const std::string path = "model_roundtrip_test.json";
  model::save_checkpoint(params, path);
  const model::ModelParams loaded = model::load_checkpoint(path);
  REQUIRE(loaded.names == params.names);
  CHECK(loaded.config.num_feature_categories ==
        params.config.num_feature_categories);
  CHECK(loaded.config.tower_hidden == params.config.tower_hidden);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    REQUIRE(loaded.tensors[i].v.size() == params.tensors[i].v.size());
    for (std::size_t k = 0; k < params.tensors[i].v.size(); ++k) {
      CHECK(loaded.tensors[i].v[k] == params.tensors[i].v[k]);  // bitwise
    }
  }
  std::filesystem::remove(path);
}
