// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "escm/diff.hpp"
#include "escm/error.hpp"
#include "test_support.hpp"

using escm::diff::Activation;
using escm::diff::Tape;
using escm::diff::Tensor;
using escm::diff::Var;

TEST_CASE("dense with identity weights reproduces the input") {
  Tape tape;
  Var x = tape.constant(Tensor::from_matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var w = tape.constant(Tensor::from_matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  Var b = tape.constant(Tensor::from_vector({0, 0, 0}));
  Var y = tape.dense(x, w, b, Activation::identity);
  CHECK(tape.value(y).v == std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("sigmoid of a zero vector is one half everywhere") {
  Tape tape;
  Var x = tape.constant(Tensor::from_matrix(1, 4, {0, 0, 0, 0}));
  Var w = tape.constant(
      Tensor::from_matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}));
  Var b = tape.constant(Tensor::from_vector({0, 0, 0, 0}));
  Var y = tape.dense(x, w, b, Activation::sigmoid);
  for (double v : tape.value(y).v) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("random 3x2 dense matches a hand-multiplied affine map") {
  Tape tape;
  // x: 1x3, w: 3x2, b: 2
  Var x = tape.constant(Tensor::from_matrix(1, 3, {0.5, -1.0, 2.0}));
  Var w = tape.constant(Tensor::from_matrix(3, 2, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6}));
  Var b = tape.constant(Tensor::from_vector({0.7, -0.8}));
  Var y = tape.dense(x, w, b, Activation::identity);
  // col 0: 0.5*0.1 - 1.0*0.3 + 2.0*0.5 + 0.7 = 1.45
  // col 1: 0.5*0.2 + 1.0*0.4 + 2.0*0.6 - 0.8 = 0.9
  CHECK(tape.value(y).v[0] == doctest::Approx(1.45));
  CHECK(tape.value(y).v[1] == doctest::Approx(0.9));
}

TEST_CASE("gradient of sum(w) is one per entry") {
  Tape tape;
  Var w = tape.leaf(Tensor::from_vector({1.0, -2.0, 3.0}), true);
  Var s = tape.sum(w);
  tape.backward(s);
  CHECK(tape.grad(w).v == std::vector<double>{1, 1, 1});
}

TEST_CASE("gradient of sigmoid at zero is 0.25") {
  Tape tape;
  Var w = tape.leaf(Tensor::from_vector({0.0}), true);
  Var y = tape.sum(tape.sigmoid(w));
  tape.backward(y);
  CHECK(tape.grad(w).v[0] == doctest::Approx(0.25));
}

TEST_CASE("stop_gradient is a forward identity") {
  Tape tape;
  Var x = tape.leaf(Tensor::from_vector({0.3, -0.7, 1.5}), true);
  Var y = tape.stop_gradient(x);
  CHECK(tape.value(y).v == tape.value(x).v);
}

TEST_CASE("parameters behind stop_gradient get exactly zero gradient") {
  Tape tape;
  Var w = tape.leaf(Tensor::from_vector({0.4, 0.6}), true);
  Var s = tape.sum(tape.stop_gradient(w));
  tape.backward(s);
  CHECK(tape.grad(w).v == std::vector<double>{0, 0});

  // Mixed path: only the direct route contributes.
  Tape tape2;
  Var v = tape2.leaf(Tensor::from_vector({0.4, 0.6}), true);
  Var mixed = tape2.sum(tape2.mul(v, tape2.stop_gradient(v)));
  tape2.backward(mixed);
  CHECK(tape2.grad(v).v == std::vector<double>{0.4, 0.6});
}

TEST_CASE("backward rejects non-scalar outputs") {
  Tape tape;
  Var w = tape.leaf(Tensor::from_vector({1.0, 2.0}), true);
  CHECK_THROWS_AS(tape.backward(w), escm::ContractError);
}

TEST_CASE("shape mismatches are reported") {
  Tape tape;
  Var a = tape.constant(Tensor::from_vector({1.0, 2.0}));
  Var b = tape.constant(Tensor::from_vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(tape.add(a, b), escm::DimensionError);

  Var x = tape.constant(Tensor::from_matrix(1, 2, {1, 2}));
  Var w = tape.constant(Tensor::from_matrix(3, 1, {1, 2, 3}));
  Var bias = tape.constant(Tensor::from_vector({0.0}));
  CHECK_THROWS_AS(tape.dense(x, w, bias, Activation::identity),
                  escm::DimensionError);

  CHECK_THROWS_AS(tape.reshape(a, {5}), escm::DimensionError);
}

TEST_CASE("embedding_mean pools rows and validates ids") {
  Tape tape;
  Var table = tape.leaf(Tensor::from_matrix(3, 2, {1, 2, 3, 4, 5, 6}), true);
  Var pooled = tape.embedding_mean(table, {{0, 2}, {1}});
  CHECK(tape.value(pooled).v[0] == doctest::Approx(3.0));  // (1+5)/2
  CHECK(tape.value(pooled).v[1] == doctest::Approx(4.0));  // (2+6)/2
  CHECK(tape.value(pooled).v[2] == doctest::Approx(3.0));
  CHECK(tape.value(pooled).v[3] == doctest::Approx(4.0));

  Var s = tape.sum(pooled);
  tape.backward(s);
  // row 0 and row 2 each get 1/2 per column, row 1 gets 1.
  CHECK(tape.grad(table).v == std::vector<double>{0.5, 0.5, 1, 1, 0.5, 0.5});

  Tape bad;
  Var t2 = bad.constant(Tensor::from_matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(bad.embedding_mean(t2, {{3}}), escm::ContractError);
  CHECK_THROWS_AS(bad.embedding_mean(t2, {std::vector<std::uint32_t>{}}),
                  escm::ContractError);
}

TEST_CASE("identical graphs produce bit-identical gradients") {
  auto run = [] {
    escm::testsupport::FdInstance inst = escm::testsupport::make_fd_instance(42);
    Tape tape;
    auto built =
        escm::testsupport::build_loss(tape, inst, escm::testsupport::LossKind::obj_dr);
    tape.backward(built.loss);
    std::vector<double> flat;
    for (const auto& name : inst.params.names) {
      auto it = built.bound.params.find(name);
      if (it == built.bound.params.end()) continue;
      const auto& g = tape.grad(it->second).v;
      flat.insert(flat.end(), g.begin(), g.end());
    }
    return flat;
  };
  const std::vector<double> a = run();
  const std::vector<double> b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);  // exact equality, not approximate
  }
}

TEST_CASE("analytic gradients agree with central finite differences") {
  using escm::testsupport::all_loss_kinds;
  using escm::testsupport::fd_max_rel_error;
  using escm::testsupport::make_fd_instance;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto inst = make_fd_instance(seed);
    for (auto kind : all_loss_kinds()) {
      const double err = fd_max_rel_error(inst, kind);
      INFO("seed ", seed, " loss ", escm::testsupport::loss_kind_name(kind));
      CHECK(err < 1e-4);
    }
  }
}
