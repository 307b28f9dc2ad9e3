// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Glue for the standard synthetic experiment: world -> sampled dataset ->
// train/validation split -> trained model, with all seeds derived from one
// run seed. Shared by the CLI commands and the sweep harness.

#pragma once

#include <cstdint>

#include "escm/config.hpp"
#include "escm/dataset.hpp"
#include "escm/synth.hpp"
#include "escm/trainer.hpp"

namespace escm::pipeline {

std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t salt);

// Salts for the per-run seed family.
inline constexpr std::uint64_t kDataSalt = 0xD1;
inline constexpr std::uint64_t kSplitSalt = 0xD2;
inline constexpr std::uint64_t kTrainSalt = 0xD3;
inline constexpr std::uint64_t kTestSalt = 0xD4;

struct RunData {
  data::Dataset train;
  data::Dataset val;
  data::SideTable side;  // counterfactuals for the sampled pairs
};

/// Samples a dataset from the world and splits off the validation fraction.
RunData prepare_synthetic(const synth::SyntheticWorld& world,
                          const config::DataConfig& data,
                          std::uint64_t run_seed);

/// Fresh click/conversion realization over the same world, used as held-out
/// test data.
synth::SampledData sample_test(const synth::SyntheticWorld& world,
                               const config::DataConfig& data,
                               std::uint64_t run_seed);

/// Full train pipeline for one run seed. The model vocab comes from the
/// world; training seeds derive from `run_seed`.
trainer::TrainResult train_synthetic(const synth::SyntheticWorld& world,
                                     const config::ExperimentConfig& base,
                                     std::uint64_t run_seed);

}  // namespace escm::pipeline
