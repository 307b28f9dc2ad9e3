// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// One JSON document drives every experiment: world, model, training, risk and
// data-handling settings plus the seed list. Unknown keys are rejected so a
// typo cannot silently fall back to a default.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "escm/ingest.hpp"
#include "escm/model.hpp"
#include "escm/synth.hpp"
#include "escm/trainer.hpp"

namespace escm::config {

struct DataConfig {
  /// Number of pairs to sample from the world; 0 means the whole exposure
  /// space.
  std::size_t n_pairs = 0;
  double validation_fraction = 0.1;
};

struct IngestConfig {
  std::string train_csv;
  ingest::IngestSchema schema;
};

struct ExperimentConfig {
  synth::WorldConfig world;
  std::uint64_t world_seed = 1;
  model::ModelConfig model;  // num_feature_categories is filled from the data
  trainer::TrainConfig train;
  DataConfig data;
  std::optional<IngestConfig> ingest;
  std::vector<std::uint64_t> seeds = {1};
  std::string output_dir = "out";

  void validate() const;
};

/// Strict parse: every key must be known, every value well-typed and in range.
ExperimentConfig parse(const nlohmann::json& doc);
ExperimentConfig load_file(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Human-readable reference of every key with its default and meaning.
std::string reference_text();

}  // namespace escm::config
