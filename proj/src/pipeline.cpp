// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/pipeline.hpp"

#include "escm/ingest.hpp"
#include "escm/rng.hpp"

namespace escm::pipeline {

std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t salt) {
  std::uint64_t s = run_seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  rng::splitmix64(s);
  return s;
}

RunData prepare_synthetic(const synth::SyntheticWorld& world,
                          const config::DataConfig& data,
                          std::uint64_t run_seed) {
  const std::size_t n_pairs =
      data.n_pairs == 0 ? world.num_pairs() : data.n_pairs;
  synth::SampledData sampled =
      synth::sample_dataset(world, n_pairs, derive_seed(run_seed, kDataSalt));
  RunData out;
  out.side = std::move(sampled.side);
  auto [train, val] = ingest::split(sampled.dataset, data.validation_fraction,
                                    derive_seed(run_seed, kSplitSalt));
  out.train = std::move(train);
  out.val = std::move(val);
  return out;
}

synth::SampledData sample_test(const synth::SyntheticWorld& world,
                               const config::DataConfig& data,
                               std::uint64_t run_seed) {
  const std::size_t n_pairs =
      data.n_pairs == 0 ? world.num_pairs() : data.n_pairs;
  return synth::sample_dataset(world, n_pairs, derive_seed(run_seed, kTestSalt));
}

trainer::TrainResult train_synthetic(const synth::SyntheticWorld& world,
                                     const config::ExperimentConfig& base,
                                     std::uint64_t run_seed) {
  RunData run = prepare_synthetic(world, base.data, run_seed);
  model::ModelConfig model_config = base.model;
  model_config.num_feature_categories = world.num_feature_categories;
  trainer::TrainConfig train_config = base.train;
  train_config.seed = derive_seed(run_seed, kTrainSalt);
  return trainer::train(run.train, run.val, model_config, train_config);
}

}  // namespace escm::pipeline
