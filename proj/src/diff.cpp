// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/diff.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace escm::diff {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.v.assign(shape_numel(t.shape), 0.0);
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.v = std::move(values);
  return t;
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols,
                           std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw DimensionError("matrix literal size does not match rows*cols");
  }
  Tensor t;
  t.shape = {rows, cols};
  t.v = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tape::Node& Tape::node(Var x) {
  if (x.id < 0 || static_cast<std::size_t>(x.id) >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(x.id)];
}

const Tape::Node& Tape::node(Var x) const {
  if (x.id < 0 || static_cast<std::size_t>(x.id) >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(x.id)];
}

bool Tape::any_parent_requires(const std::vector<int>& parents) const {
  for (int p : parents) {
    if (nodes_[static_cast<std::size_t>(p)].requires_grad) return true;
  }
  return false;
}

Var Tape::push(Tensor value, std::vector<int> parents,
               std::function<void(Tape&, Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = any_parent_requires(parents);
  n.parents = std::move(parents);
  if (n.requires_grad) {
    n.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(n));
  grads_valid_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (value.numel() != shape_numel(value.shape)) {
    throw DimensionError("leaf tensor values do not match its shape");
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  grads_valid_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::embedding_mean(Var table, std::vector<std::vector<std::uint32_t>> ids) {
  const Tensor& tab = node(table).value;
  if (tab.shape.size() != 2) {
    throw DimensionError("embedding table must be rank 2");
  }
  const std::size_t vocab = tab.shape[0];
  const std::size_t dim = tab.shape[1];
  const std::size_t batch = ids.size();
  Tensor out = Tensor::zeros({batch, dim});
  for (std::size_t r = 0; r < batch; ++r) {
    if (ids[r].empty()) {
      throw ContractError("embedding_mean: row " + std::to_string(r) +
                          " has no feature ids");
    }
    const double inv = 1.0 / static_cast<double>(ids[r].size());
    for (std::uint32_t id : ids[r]) {
      if (id >= vocab) {
        throw ContractError("embedding_mean: feature id " + std::to_string(id) +
                            " out of range (vocab " + std::to_string(vocab) + ")");
      }
      const double* row = &tab.v[id * dim];
      double* dst = &out.v[r * dim];
      for (std::size_t k = 0; k < dim; ++k) dst[k] += row[k] * inv;
    }
  }
  const int tid = table.id;
  auto captured = std::make_shared<std::vector<std::vector<std::uint32_t>>>(std::move(ids));
  return push(std::move(out), {tid},
              [tid, captured, dim](Tape& t, Node& self) {
                Tensor& gt = t.nodes_[static_cast<std::size_t>(tid)].grad;
                const std::size_t batch = captured->size();
                for (std::size_t r = 0; r < batch; ++r) {
                  const auto& row_ids = (*captured)[r];
                  const double inv = 1.0 / static_cast<double>(row_ids.size());
                  const double* g = &self.grad.v[r * dim];
                  for (std::uint32_t id : row_ids) {
                    double* dst = &gt.v[id * dim];
                    for (std::size_t k = 0; k < dim; ++k) dst[k] += g[k] * inv;
                  }
                }
              });
}

Var Tape::dense(Var x, Var w, Var b, Activation activation) {
  const Tensor& xv = node(x).value;
  const Tensor& wv = node(w).value;
  const Tensor& bv = node(b).value;
  if (xv.shape.size() != 2 || wv.shape.size() != 2) {
    throw DimensionError("dense: input and weights must be rank 2");
  }
  const std::size_t batch = xv.shape[0];
  const std::size_t in = xv.shape[1];
  const std::size_t out = wv.shape[1];
  if (wv.shape[0] != in) {
    throw DimensionError("dense: weights rows " + std::to_string(wv.shape[0]) +
                         " != input cols " + std::to_string(in));
  }
  if (bv.numel() != out) {
    throw DimensionError("dense: bias size " + std::to_string(bv.numel()) +
                         " != output width " + std::to_string(out));
  }

  Tensor z = Tensor::zeros({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = &xv.v[r * in];
    double* zr = &z.v[r * out];
    for (std::size_t j = 0; j < out; ++j) zr[j] = bv.v[j];
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = xr[k];
      const double* wk = &wv.v[k * out];
      for (std::size_t j = 0; j < out; ++j) zr[j] += xk * wk[j];
    }
  }

  const int xid = x.id;
  const int wid = w.id;
  const int bid = b.id;
  Var affine = push(std::move(z), {xid, wid, bid},
                    [xid, wid, bid, batch, in, out](Tape& t, Node& self) {
                      const Tensor& xv = t.nodes_[static_cast<std::size_t>(xid)].value;
                      const Tensor& wv = t.nodes_[static_cast<std::size_t>(wid)].value;
                      Tensor& gx = t.nodes_[static_cast<std::size_t>(xid)].grad;
                      Tensor& gw = t.nodes_[static_cast<std::size_t>(wid)].grad;
                      Tensor& gb = t.nodes_[static_cast<std::size_t>(bid)].grad;
                      for (std::size_t r = 0; r < batch; ++r) {
                        const double* g = &self.grad.v[r * out];
                        const double* xr = &xv.v[r * in];
                        double* gxr = &gx.v[r * in];
                        for (std::size_t k = 0; k < in; ++k) {
                          const double* wk = &wv.v[k * out];
                          double acc = 0.0;
                          for (std::size_t j = 0; j < out; ++j) acc += wk[j] * g[j];
                          gxr[k] += acc;
                          double* gwk = &gw.v[k * out];
                          const double xk = xr[k];
                          for (std::size_t j = 0; j < out; ++j) gwk[j] += xk * g[j];
                        }
                        for (std::size_t j = 0; j < out; ++j) gb.v[j] += g[j];
                      }
                    });
  switch (activation) {
    case Activation::identity:
      return affine;
    case Activation::relu:
      return relu(affine);
    case Activation::sigmoid:
      return sigmoid(affine);
  }
  throw ContractError("dense: unknown activation");
}

Var Tape::unary(Var x, std::function<double(double)> forward,
                std::function<double(double, double)> derivative_from_xy) {
  const Tensor& xv = node(x).value;
  Tensor out;
  out.shape = xv.shape;
  out.v.resize(xv.v.size());
  for (std::size_t i = 0; i < xv.v.size(); ++i) out.v[i] = forward(xv.v[i]);
  const int xid = x.id;
  return push(std::move(out), {xid},
              [xid, derivative_from_xy](Tape& t, Node& self) {
                const Tensor& xv = t.nodes_[static_cast<std::size_t>(xid)].value;
                Tensor& gx = t.nodes_[static_cast<std::size_t>(xid)].grad;
                for (std::size_t i = 0; i < xv.v.size(); ++i) {
                  gx.v[i] += self.grad.v[i] *
                             derivative_from_xy(xv.v[i], self.value.v[i]);
                }
              });
}

Var Tape::relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var Tape::sigmoid(Var x) {
  return unary(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var Tape::softplus(Var x) {
  return unary(
      x, [](double v) { return stable_softplus(v); },
      [](double v, double) { return stable_sigmoid(v); });
}

Var Tape::log(Var x) {
  return unary(
      x, [](double v) { return std::log(v < kEpsilon ? kEpsilon : v); },
      [](double v, double) { return v < kEpsilon ? 0.0 : 1.0 / v; });
}

Var Tape::square(Var x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Var Tape::neg(Var x) {
  return unary(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.numel() != bv.numel()) throw DimensionError("add: size mismatch");
  Tensor out;
  out.shape = av.shape;
  out.v.resize(av.v.size());
  for (std::size_t i = 0; i < av.v.size(); ++i) out.v[i] = av.v[i] + bv.v[i];
  const int aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid}, [aid, bid](Tape& t, Node& self) {
    Tensor& ga = t.nodes_[static_cast<std::size_t>(aid)].grad;
    Tensor& gb = t.nodes_[static_cast<std::size_t>(bid)].grad;
    for (std::size_t i = 0; i < self.grad.v.size(); ++i) {
      ga.v[i] += self.grad.v[i];
      gb.v[i] += self.grad.v[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.numel() != bv.numel()) throw DimensionError("sub: size mismatch");
  Tensor out;
  out.shape = av.shape;
  out.v.resize(av.v.size());
  for (std::size_t i = 0; i < av.v.size(); ++i) out.v[i] = av.v[i] - bv.v[i];
  const int aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid}, [aid, bid](Tape& t, Node& self) {
    Tensor& ga = t.nodes_[static_cast<std::size_t>(aid)].grad;
    Tensor& gb = t.nodes_[static_cast<std::size_t>(bid)].grad;
    for (std::size_t i = 0; i < self.grad.v.size(); ++i) {
      ga.v[i] += self.grad.v[i];
      gb.v[i] -= self.grad.v[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.numel() != bv.numel()) throw DimensionError("mul: size mismatch");
  Tensor out;
  out.shape = av.shape;
  out.v.resize(av.v.size());
  for (std::size_t i = 0; i < av.v.size(); ++i) out.v[i] = av.v[i] * bv.v[i];
  const int aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid}, [aid, bid](Tape& t, Node& self) {
    const Tensor& av = t.nodes_[static_cast<std::size_t>(aid)].value;
    const Tensor& bv = t.nodes_[static_cast<std::size_t>(bid)].value;
    Tensor& ga = t.nodes_[static_cast<std::size_t>(aid)].grad;
    Tensor& gb = t.nodes_[static_cast<std::size_t>(bid)].grad;
    for (std::size_t i = 0; i < self.grad.v.size(); ++i) {
      ga.v[i] += self.grad.v[i] * bv.v[i];
      gb.v[i] += self.grad.v[i] * av.v[i];
    }
  });
}

Var Tape::div(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.numel() != bv.numel()) throw DimensionError("div: size mismatch");
  Tensor out;
  out.shape = av.shape;
  out.v.resize(av.v.size());
  auto safe_denom = [](double d) {
    const double mag = std::fabs(d) < kEpsilon ? kEpsilon : std::fabs(d);
    return d < 0.0 ? -mag : mag;
  };
  for (std::size_t i = 0; i < av.v.size(); ++i) {
    out.v[i] = av.v[i] / safe_denom(bv.v[i]);
  }
  const int aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid},
              [aid, bid, safe_denom](Tape& t, Node& self) {
                const Tensor& av = t.nodes_[static_cast<std::size_t>(aid)].value;
                const Tensor& bv = t.nodes_[static_cast<std::size_t>(bid)].value;
                Tensor& ga = t.nodes_[static_cast<std::size_t>(aid)].grad;
                Tensor& gb = t.nodes_[static_cast<std::size_t>(bid)].grad;
                for (std::size_t i = 0; i < self.grad.v.size(); ++i) {
                  const double d = safe_denom(bv.v[i]);
                  ga.v[i] += self.grad.v[i] / d;
                  gb.v[i] -= self.grad.v[i] * av.v[i] / (d * d);
                }
              });
}

Var Tape::add_const(Var x, double c) {
  return unary(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var Tape::mul_const(Var x, double c) {
  return unary(
      x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Var Tape::clamp_min(Var x, double bound) {
  return unary(
      x, [bound](double v) { return v < bound ? bound : v; },
      [bound](double v, double) { return v < bound ? 0.0 : 1.0; });
}

Var Tape::clamp_max(Var x, double bound) {
  return unary(
      x, [bound](double v) { return v > bound ? bound : v; },
      [bound](double v, double) { return v > bound ? 0.0 : 1.0; });
}

Var Tape::sum(Var x) {
  const Tensor& xv = node(x).value;
  double acc = 0.0;
  for (double v : xv.v) acc += v;
  const int xid = x.id;
  return push(Tensor::scalar(acc), {xid}, [xid](Tape& t, Node& self) {
    Tensor& gx = t.nodes_[static_cast<std::size_t>(xid)].grad;
    const double g = self.grad.v[0];
    for (double& gv : gx.v) gv += g;
  });
}

Var Tape::mean(Var x) {
  const Tensor& xv = node(x).value;
  if (xv.v.empty()) throw ContractError("mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(xv.v.size());
  double acc = 0.0;
  for (double v : xv.v) acc += v;
  const int xid = x.id;
  return push(Tensor::scalar(acc * inv), {xid}, [xid, inv](Tape& t, Node& self) {
    Tensor& gx = t.nodes_[static_cast<std::size_t>(xid)].grad;
    const double g = self.grad.v[0] * inv;
    for (double& gv : gx.v) gv += g;
  });
}

Var Tape::stop_gradient(Var x) {
  Tensor copy = node(x).value;
  // Deliberately a leaf: requires_grad is false and no backprop is attached,
  // so upstream gradient terminates here.
  return leaf(std::move(copy), false);
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
  const Tensor& xv = node(x).value;
  if (shape_numel(shape) != xv.numel()) {
    throw DimensionError("reshape: element count mismatch");
  }
  Tensor out;
  out.shape = std::move(shape);
  out.v = xv.v;
  const int xid = x.id;
  return push(std::move(out), {xid}, [xid](Tape& t, Node& self) {
    Tensor& gx = t.nodes_[static_cast<std::size_t>(xid)].grad;
    for (std::size_t i = 0; i < self.grad.v.size(); ++i) {
      gx.v[i] += self.grad.v[i];
    }
  });
}

void Tape::backward(Var scalar_output) {
  Node& out = node(scalar_output);
  if (out.value.numel() != 1) {
    throw ContractError("backward: output must be a scalar (shape [1])");
  }
  for (Node& n : nodes_) {
    n.grad.shape = n.value.shape;
    n.grad.v.assign(n.value.v.size(), 0.0);
  }
  out.grad.v[0] = 1.0;
  for (int i = scalar_output.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backprop && n.requires_grad) {
      n.backprop(*this, n);
    }
  }
  grads_valid_ = true;
}

const Tensor& Tape::grad(Var x) const {
  if (!grads_valid_) {
    throw ContractError("grad: call backward() first");
  }
  return node(x).grad;
}

}  // namespace escm::diff
