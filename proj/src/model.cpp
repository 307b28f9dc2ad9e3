// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "escm/error.hpp"
#include "escm/rng.hpp"

namespace escm::model {

namespace {

const char* const kTowers[] = {"ctr", "cvr", "imp"};

std::string layer_name(const std::string& tower, std::size_t layer,
                       const char* kind) {
  return tower + ".l" + std::to_string(layer) + "." + kind;
}

diff::Tensor glorot_uniform(std::size_t rows, std::size_t cols,
                            rng::Stream stream) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  diff::Tensor t = diff::Tensor::zeros({rows, cols});
  for (double& v : t.v) v = (stream.next_unit() * 2.0 - 1.0) * s;
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (num_feature_categories == 0) {
    throw ConfigError("model: num_feature_categories must be >= 1");
  }
  if (embed_dim == 0) throw ConfigError("model: embed_dim must be >= 1");
  for (std::size_t w : tower_hidden) {
    if (w == 0) throw ConfigError("model: tower widths must be >= 1");
  }
}

diff::Tensor& ModelParams::find(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw ContractError("unknown parameter '" + name + "'");
}

const diff::Tensor& ModelParams::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw ContractError("unknown parameter '" + name + "'");
}

bool ModelParams::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  rng::Stream root(seed);
  std::uint64_t tensor_key = 0;

  p.names.push_back("embedding");
  p.tensors.push_back(glorot_uniform(config.num_feature_categories,
                                     config.embed_dim, root.fork(tensor_key++)));

  for (const char* tower : kTowers) {
    std::size_t in = config.embed_dim;
    for (std::size_t l = 0; l < config.tower_hidden.size(); ++l) {
      const std::size_t out = config.tower_hidden[l];
      p.names.push_back(layer_name(tower, l, "w"));
      p.tensors.push_back(glorot_uniform(in, out, root.fork(tensor_key++)));
      p.names.push_back(layer_name(tower, l, "b"));
      p.tensors.push_back(diff::Tensor::zeros({out}));
      ++tensor_key;  // keep keying stable whether or not a tensor draws
      in = out;
    }
    p.names.push_back(std::string(tower) + ".out.w");
    p.tensors.push_back(glorot_uniform(in, 1, root.fork(tensor_key++)));
    p.names.push_back(std::string(tower) + ".out.b");
    p.tensors.push_back(diff::Tensor::zeros({1}));
    ++tensor_key;
  }
  return p;
}

namespace {

diff::Var tower_forward(diff::Tape& tape, const ModelParams& params,
                        const std::unordered_map<std::string, diff::Var>& leaves,
                        const std::string& tower, diff::Var pooled,
                        bool sigmoid_head) {
  diff::Var h = pooled;
  for (std::size_t l = 0; l < params.config.tower_hidden.size(); ++l) {
    h = tape.dense(h, leaves.at(layer_name(tower, l, "w")),
                   leaves.at(layer_name(tower, l, "b")), diff::Activation::relu);
  }
  diff::Var out = tape.dense(h, leaves.at(tower + ".out.w"),
                             leaves.at(tower + ".out.b"),
                             sigmoid_head ? diff::Activation::sigmoid
                                          : diff::Activation::identity);
  if (!sigmoid_head) out = tape.softplus(out);
  const std::size_t batch = tape.value(pooled).rows();
  return tape.reshape(out, {batch});
}

}  // namespace

BoundModel bind_forward(diff::Tape& tape, const ModelParams& params,
                        const std::vector<std::vector<std::uint32_t>>& feature_ids,
                        bool with_imputation) {
  if (feature_ids.empty()) {
    throw ContractError("bind_forward: empty batch");
  }
  BoundModel bm;
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const std::string& name = params.names[i];
    if (!with_imputation && name.rfind("imp.", 0) == 0) continue;
    bm.params.emplace(name, tape.leaf(params.tensors[i], /*requires_grad=*/true));
  }

  diff::Var pooled = tape.embedding_mean(bm.params.at("embedding"), feature_ids);
  bm.ctr_hat = tower_forward(tape, params, bm.params, "ctr", pooled, true);
  bm.cvr_hat = tower_forward(tape, params, bm.params, "cvr", pooled, true);
  bm.ctcvr_hat = tape.mul(bm.ctr_hat, bm.cvr_hat);
  if (with_imputation) {
    bm.imputed_error = tower_forward(tape, params, bm.params, "imp", pooled, false);
    bm.has_imputation = true;
  }
  return bm;
}

PredictionBatch predict(const ModelParams& params,
                        const std::vector<std::vector<std::uint32_t>>& feature_ids,
                        bool with_imputation) {
  constexpr std::size_t kChunk = 4096;
  PredictionBatch out;
  out.ctr.reserve(feature_ids.size());
  out.cvr.reserve(feature_ids.size());
  out.ctcvr.reserve(feature_ids.size());
  if (with_imputation) out.imputed.reserve(feature_ids.size());

  for (std::size_t begin = 0; begin < feature_ids.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, feature_ids.size());
    std::vector<std::vector<std::uint32_t>> chunk(feature_ids.begin() + begin,
                                                  feature_ids.begin() + end);
    diff::Tape tape;
    BoundModel bm = bind_forward(tape, params, chunk, with_imputation);
    const auto& ctr = tape.value(bm.ctr_hat).v;
    const auto& cvr = tape.value(bm.cvr_hat).v;
    const auto& ctcvr = tape.value(bm.ctcvr_hat).v;
    out.ctr.insert(out.ctr.end(), ctr.begin(), ctr.end());
    out.cvr.insert(out.cvr.end(), cvr.begin(), cvr.end());
    out.ctcvr.insert(out.ctcvr.end(), ctcvr.begin(), ctcvr.end());
    if (with_imputation) {
      const auto& imp = tape.value(bm.imputed_error).v;
      out.imputed.insert(out.imputed.end(), imp.begin(), imp.end());
    }
  }
  return out;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  nlohmann::json doc;
  doc["format"] = "escm-checkpoint-v1";
  doc["config"] = {
      {"num_feature_categories", params.config.num_feature_categories},
      {"embed_dim", params.config.embed_dim},
      {"tower_hidden", params.config.tower_hidden},
  };
  nlohmann::json tensors = nlohmann::json::object();
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    tensors[params.names[i]] = {{"shape", params.tensors[i].shape},
                                {"values", params.tensors[i].v}};
  }
  doc["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint parse error in " + path + ": " + e.what());
  }
  if (doc.value("format", "") != "escm-checkpoint-v1") {
    throw DataError("unrecognized checkpoint format in " + path);
  }
  ModelConfig config;
  config.num_feature_categories = doc.at("config").at("num_feature_categories");
  config.embed_dim = doc.at("config").at("embed_dim");
  config.tower_hidden =
      doc.at("config").at("tower_hidden").get<std::vector<std::size_t>>();

  // Rebuild through init_params to get the canonical name order, then fill.
  ModelParams params = init_params(config, /*seed=*/0);
  const auto& tensors = doc.at("tensors");
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const auto& entry = tensors.at(params.names[i]);
    diff::Tensor t;
    t.shape = entry.at("shape").get<std::vector<std::size_t>>();
    t.v = entry.at("values").get<std::vector<double>>();
    if (t.v.size() != params.tensors[i].v.size() ||
        t.shape != params.tensors[i].shape) {
      throw DataError("checkpoint tensor '" + params.names[i] +
                      "' has unexpected shape");
    }
    params.tensors[i] = std::move(t);
  }
  return params;
}

}  // namespace escm::model
