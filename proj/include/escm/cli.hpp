// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Subcommands: simulate | train | evaluate | diagnose | sweep |
// config-reference. Exit codes: 0 success, 1 configuration error, 2
// runtime/numerical failure. Output files are byte-identical across repeated
// runs with the same config and seeds; wall-clock timestamps live only in
// run_manifest.json.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "escm/config.hpp"

namespace escm::cli {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

int run(int argc, const char* const* argv);

// Individual commands, exposed for tests. Each returns an exit code and
// writes its artifacts under `out_dir`.
int cmd_simulate(const config::ExperimentConfig& config,
                 const std::string& out_dir);
int cmd_train(const config::ExperimentConfig& config, const std::string& out_dir,
              const std::optional<std::string>& dataset_csv);
int cmd_evaluate(const std::string& checkpoint_path,
                 const std::string& dataset_csv,
                 const std::optional<std::string>& world_json,
                 const std::string& out_dir);
int cmd_diagnose(const std::vector<std::string>& checkpoint_paths,
                 const std::string& dataset_csv,
                 const std::optional<std::string>& world_json,
                 const std::string& out_dir);
int cmd_sweep(const config::ExperimentConfig& config, const std::string& param,
              const std::vector<double>& grid, unsigned jobs,
              const std::string& out_dir);

/// World summary JSON (config + seed + derived stats); enough to regenerate
/// the world bit-identically.
nlohmann::json world_summary(const synth::SyntheticWorld& world);
synth::SyntheticWorld world_from_summary(const std::string& path);

}  // namespace escm::cli
