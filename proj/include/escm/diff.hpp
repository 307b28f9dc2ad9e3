// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over a dynamic tape. Supports exactly
// what the estimator towers and losses need: embedding lookup with mean
// pooling, affine layers, a handful of elementwise primitives, scalar
// reductions, and a stop-gradient marker that blocks backward flow.
//
// No broadcasting beyond (batch x feature), no views, no higher-order
// derivatives. Node order on the tape is construction order, which is a valid
// topological order; backward walks it once in reverse.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "escm/error.hpp"

namespace escm::diff {

/// Arguments of log and magnitudes of denominators are clamped to this value.
inline constexpr double kEpsilon = 1e-7;

struct Tensor {
  std::vector<std::size_t> shape;  // rank 1 ([n]) or 2 ([rows, cols])
  std::vector<double> v;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double x) { return Tensor{{1}, {x}}; }
  static Tensor from_vector(std::vector<double> values);
  static Tensor from_matrix(std::size_t rows, std::size_t cols,
                            std::vector<double> values);

  std::size_t numel() const { return v.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

enum class Activation { identity, relu, sigmoid };

/// Handle to a node on a Tape. Cheap to copy; valid only for the tape that
/// produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- graph construction -------------------------------------------------
  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Row pooling over an embedding table: out[r, :] = mean_k table[ids[r][k], :].
  /// Every row must carry at least one id; ids must index into the table.
  Var embedding_mean(Var table, std::vector<std::vector<std::uint32_t>> ids);

  /// x:[B,in] * w:[in,out] + b:[out], then activation.
  Var dense(Var x, Var w, Var b, Activation activation);

  Var relu(Var x);
  Var sigmoid(Var x);
  Var softplus(Var x);
  Var log(Var x);
  Var square(Var x);
  Var neg(Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var add_const(Var x, double c);
  Var mul_const(Var x, double c);
  Var clamp_min(Var x, double bound);
  Var clamp_max(Var x, double bound);

  Var sum(Var x);
  Var mean(Var x);

  /// Forward identity; contributes zero gradient to its parent.
  Var stop_gradient(Var x);

  /// Same data, new shape (numel must match). Gradient passes through.
  Var reshape(Var x, std::vector<std::size_t> shape);

  // --- execution -----------------------------------------------------------
  /// Seeds d(out)/d(out) = 1 and propagates to every node, in reverse
  /// construction order. `scalar_output` must have shape [1].
  void backward(Var scalar_output);

  const Tensor& value(Var x) const { return node(x).value; }
  /// Gradient of the last backward() output w.r.t. this node. Zero-filled for
  /// nodes the output does not depend on. Invalid before backward().
  const Tensor& grad(Var x) const;
  bool requires_grad(Var x) const { return node(x).requires_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated by backward()
    std::vector<int> parents;
    // Accumulates into parents' grads given this node's grad. Null for leaves.
    std::function<void(Tape&, Node&)> backprop;
    bool requires_grad = false;
  };

  Node& node(Var x);
  const Node& node(Var x) const;
  Var push(Tensor value, std::vector<int> parents,
           std::function<void(Tape&, Node&)> backprop);
  bool any_parent_requires(const std::vector<int>& parents) const;

  Var unary(Var x, std::function<double(double)> forward,
            std::function<double(double, double)> derivative_from_xy);

  std::vector<Node> nodes_;
  bool grads_valid_ = false;
};

}  // namespace escm::diff
