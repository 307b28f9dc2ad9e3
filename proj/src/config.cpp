// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "escm/error.hpp"

namespace escm::config {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& scope) {
  if (!obj.is_object()) {
    throw ConfigError("config: '" + scope + "' must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw ConfigError("config: unknown key '" +
                        (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

void parse_world(const json& obj, synth::WorldConfig& world) {
  reject_unknown_keys(obj,
                      {"num_users", "num_items", "user_feature_vocab",
                       "item_feature_vocab", "features_per_user",
                       "features_per_item", "target_ctr", "target_cvr",
                       "confound_strength", "feature_logit_scale", "ctr_noise",
                       "cvr_noise"},
                      "world");
  read(obj, "num_users", world.num_users);
  read(obj, "num_items", world.num_items);
  read(obj, "user_feature_vocab", world.user_feature_vocab);
  read(obj, "item_feature_vocab", world.item_feature_vocab);
  read(obj, "features_per_user", world.features_per_user);
  read(obj, "features_per_item", world.features_per_item);
  read(obj, "target_ctr", world.target_ctr);
  read(obj, "target_cvr", world.target_cvr);
  read(obj, "confound_strength", world.confound_strength);
  read(obj, "feature_logit_scale", world.feature_logit_scale);
  read(obj, "ctr_noise", world.ctr_noise);
  read(obj, "cvr_noise", world.cvr_noise);
}

void parse_model(const json& obj, model::ModelConfig& model) {
  reject_unknown_keys(obj, {"embed_dim", "tower_hidden"}, "model");
  read(obj, "embed_dim", model.embed_dim);
  read(obj, "tower_hidden", model.tower_hidden);
}

void parse_risk(const json& obj, risks::RiskConfig& risk) {
  reject_unknown_keys(obj,
                      {"variant", "lambda_c", "lambda_g", "propensity_clip",
                       "truncate_propensity_gradient", "imputation_updates_cvr"},
                      "train.risk");
  if (obj.contains("variant")) {
    std::string name;
    read(obj, "variant", name);
    risk.variant = risks::variant_from_string(name);
  }
  read(obj, "lambda_c", risk.lambda_c);
  read(obj, "lambda_g", risk.lambda_g);
  read(obj, "propensity_clip", risk.propensity_clip);
  read(obj, "truncate_propensity_gradient", risk.truncate_propensity_gradient);
  read(obj, "imputation_updates_cvr", risk.imputation_updates_cvr);
}

void parse_train(const json& obj, trainer::TrainConfig& train) {
  reject_unknown_keys(obj,
                      {"learning_rate", "weight_decay", "adam_beta1",
                       "adam_beta2", "adam_epsilon", "batch_size",
                       "max_iterations", "checkpoint_every", "risk"},
                      "train");
  read(obj, "learning_rate", train.learning_rate);
  read(obj, "weight_decay", train.weight_decay);
  read(obj, "adam_beta1", train.adam_beta1);
  read(obj, "adam_beta2", train.adam_beta2);
  read(obj, "adam_epsilon", train.adam_epsilon);
  read(obj, "batch_size", train.batch_size);
  read(obj, "max_iterations", train.max_iterations);
  read(obj, "checkpoint_every", train.checkpoint_every);
  if (obj.contains("risk")) parse_risk(obj.at("risk"), train.risk);
}

void parse_data(const json& obj, DataConfig& data) {
  reject_unknown_keys(obj, {"n_pairs", "validation_fraction"}, "data");
  read(obj, "n_pairs", data.n_pairs);
  read(obj, "validation_fraction", data.validation_fraction);
}

void parse_ingest(const json& obj, IngestConfig& ingest_config) {
  reject_unknown_keys(
      obj, {"train_csv", "feature_columns", "click_column", "conversion_column",
            "delimiter"},
      "ingest");
  read(obj, "train_csv", ingest_config.train_csv);
  read(obj, "feature_columns", ingest_config.schema.feature_columns);
  read(obj, "click_column", ingest_config.schema.click_column);
  read(obj, "conversion_column", ingest_config.schema.conversion_column);
  std::string delim;
  read(obj, "delimiter", delim);
  if (!delim.empty()) {
    if (delim.size() != 1) {
      throw ConfigError("config: ingest.delimiter must be one character");
    }
    ingest_config.schema.delimiter = delim[0];
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  world.validate();
  if (model.embed_dim == 0) throw ConfigError("model: embed_dim must be >= 1");
  for (std::size_t w : model.tower_hidden) {
    if (w == 0) throw ConfigError("model: tower widths must be >= 1");
  }
  train.validate();
  if (!(data.validation_fraction > 0.0 && data.validation_fraction < 1.0)) {
    throw ConfigError("data: validation_fraction must lie in (0,1)");
  }
  const std::size_t total = world.num_users * world.num_items;
  if (data.n_pairs > total) {
    throw ConfigError("data: n_pairs exceeds the exposure space");
  }
  if (seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  if (ingest.has_value()) {
    ingest->schema.validate();
    if (ingest->train_csv.empty()) {
      throw ConfigError("ingest: train_csv path required");
    }
  }
}

ExperimentConfig parse(const nlohmann::json& doc) {
  ExperimentConfig config;
  reject_unknown_keys(doc,
                      {"world", "world_seed", "model", "train", "data",
                       "ingest", "seeds", "output_dir"},
                      "");
  if (doc.contains("world")) parse_world(doc.at("world"), config.world);
  read(doc, "world_seed", config.world_seed);
  if (doc.contains("model")) parse_model(doc.at("model"), config.model);
  if (doc.contains("train")) parse_train(doc.at("train"), config.train);
  if (doc.contains("data")) parse_data(doc.at("data"), config.data);
  if (doc.contains("ingest")) {
    IngestConfig ic;
    parse_ingest(doc.at("ingest"), ic);
    config.ingest = std::move(ic);
  }
  read(doc, "seeds", config.seeds);
  read(doc, "output_dir", config.output_dir);
  config.validate();
  return config;
}

ExperimentConfig load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse(doc);
}

nlohmann::json to_json(const ExperimentConfig& config) {
  nlohmann::json doc;
  doc["world"] = {
      {"num_users", config.world.num_users},
      {"num_items", config.world.num_items},
      {"user_feature_vocab", config.world.user_feature_vocab},
      {"item_feature_vocab", config.world.item_feature_vocab},
      {"features_per_user", config.world.features_per_user},
      {"features_per_item", config.world.features_per_item},
      {"target_ctr", config.world.target_ctr},
      {"target_cvr", config.world.target_cvr},
      {"confound_strength", config.world.confound_strength},
      {"feature_logit_scale", config.world.feature_logit_scale},
      {"ctr_noise", config.world.ctr_noise},
      {"cvr_noise", config.world.cvr_noise},
  };
  doc["world_seed"] = config.world_seed;
  doc["model"] = {
      {"embed_dim", config.model.embed_dim},
      {"tower_hidden", config.model.tower_hidden},
  };
  doc["train"] = {
      {"learning_rate", config.train.learning_rate},
      {"weight_decay", config.train.weight_decay},
      {"adam_beta1", config.train.adam_beta1},
      {"adam_beta2", config.train.adam_beta2},
      {"adam_epsilon", config.train.adam_epsilon},
      {"batch_size", config.train.batch_size},
      {"max_iterations", config.train.max_iterations},
      {"checkpoint_every", config.train.checkpoint_every},
      {"risk",
       {
           {"variant", risks::to_string(config.train.risk.variant)},
           {"lambda_c", config.train.risk.lambda_c},
           {"lambda_g", config.train.risk.lambda_g},
           {"propensity_clip", config.train.risk.propensity_clip},
           {"truncate_propensity_gradient",
            config.train.risk.truncate_propensity_gradient},
           {"imputation_updates_cvr", config.train.risk.imputation_updates_cvr},
       }},
  };
  doc["data"] = {
      {"n_pairs", config.data.n_pairs},
      {"validation_fraction", config.data.validation_fraction},
  };
  if (config.ingest.has_value()) {
    doc["ingest"] = {
        {"train_csv", config.ingest->train_csv},
        {"feature_columns", config.ingest->schema.feature_columns},
        {"click_column", config.ingest->schema.click_column},
        {"conversion_column", config.ingest->schema.conversion_column},
        {"delimiter", std::string(1, config.ingest->schema.delimiter)},
    };
  }
  doc["seeds"] = config.seeds;
  doc["output_dir"] = config.output_dir;
  return doc;
}

std::string reference_text() {
  const ExperimentConfig defaults;
  std::ostringstream out;
  out << "Experiment config reference (JSON). Unknown keys are rejected.\n\n"
      << "world.num_users / world.num_items   exposure space dimensions "
         "(defaults 200 x 200)\n"
      << "world.user_feature_vocab            user-side categorical vocab (32)\n"
      << "world.item_feature_vocab            item-side categorical vocab (32)\n"
      << "world.features_per_user             categorical ids per user (2)\n"
      << "world.features_per_item             categorical ids per item (2)\n"
      << "world.target_ctr                    calibrated mean click rate (0.04)\n"
      << "world.target_cvr                    calibrated mean conversion rate "
         "given click (0.1)\n"
      << "world.confound_strength             weight of logit(ctr) in the "
         "conversion logit; > 0 ties click and conversion propensity (1.0)\n"
      << "world.feature_logit_scale           sd of per-category logit weights "
         "(1.2)\n"
      << "world.ctr_noise / world.cvr_noise   per-pair logit noise sd (0.4 / 0.4)\n"
      << "world_seed                          world generation seed (1)\n\n"
      << "model.embed_dim                     embedding width (5)\n"
      << "model.tower_hidden                  hidden widths per tower ([32,16])\n\n"
      << "train.learning_rate                 Adam learning rate (1e-4)\n"
      << "train.weight_decay                  decoupled weight decay (1e-3)\n"
      << "train.adam_beta1 / beta2 / epsilon  Adam moments (0.9 / 0.999 / 1e-8)\n"
      << "train.batch_size                    minibatch size (1024)\n"
      << "train.max_iterations                optimizer steps (20000)\n"
      << "train.checkpoint_every              validation cadence (1000)\n"
      << "train.risk.variant                  naive | mtl_imp | esmm | "
         "escm2_ips | escm2_dr (escm2_ips)\n"
      << "train.risk.lambda_c                 counterfactual risk weight (0.1)\n"
      << "train.risk.lambda_g                 global CTCVR risk weight (1.0)\n"
      << "train.risk.propensity_clip          lower clip inside propensity "
         "denominators (0.1)\n"
      << "train.risk.truncate_propensity_gradient  stop-gradient on the "
         "propensity (true)\n"
      << "train.risk.imputation_updates_cvr   let the imputation loss reach the "
         "CVR tower (false)\n\n"
      << "data.n_pairs                        pairs sampled from the world; 0 = "
         "all (0)\n"
      << "data.validation_fraction            held-out fraction for validation "
         "(0.1)\n\n"
      << "ingest.train_csv                    optional flat-schema CSV to train "
         "from instead of a synthetic world\n"
      << "ingest.feature_columns              categorical feature column names\n"
      << "ingest.click_column / conversion_column  binary label columns "
         "(click / conversion)\n"
      << "ingest.delimiter                    single-character delimiter (,)\n\n"
      << "seeds                               run seeds ([1])\n"
      << "output_dir                          artifact directory (out)\n\n"
      << "defaults as JSON:\n"
      << to_json(defaults).dump(2) << "\n";
  return out.str();
}

}  // namespace escm::config
