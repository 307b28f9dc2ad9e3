// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "escm/error.hpp"
#include "escm/evaluate.hpp"
#include "escm/causal.hpp"
#include "escm/log.hpp"
#include "escm/pipeline.hpp"

namespace escm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir);
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("JSON parse error in " + path + ": " + e.what());
  }
  return doc;
}

// Timestamps are quarantined here so every other artifact stays byte-stable.
void write_manifest(const std::string& out_dir, const std::string& command) {
  const auto now = std::chrono::system_clock::now();
  const auto epoch_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            now.time_since_epoch())
                            .count();
  write_json(json{{"command", command}, {"completed_unix_ms", epoch_ms}},
             out_dir + "/run_manifest.json");
}

int guard(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

std::vector<std::vector<std::uint32_t>> feature_lists(const data::Dataset& ds) {
  std::vector<std::vector<std::uint32_t>> ids;
  ids.reserve(ds.rows.size());
  for (const data::Row& row : ds.rows) ids.push_back(row.feature_ids);
  return ids;
}

std::optional<double> oracle_reference_from(
    const std::optional<std::string>& world_json) {
  if (!world_json.has_value()) return std::nullopt;
  const synth::SyntheticWorld world = world_from_summary(*world_json);
  return synth::oracle_cvr_expectation(world);
}

}  // namespace

json world_summary(const synth::SyntheticWorld& world) {
  config::ExperimentConfig wrapper;
  wrapper.world = world.config;
  const json world_cfg = config::to_json(wrapper)["world"];
  double mean_ctr = 0.0;
  for (double p : world.true_ctr) mean_ctr += p;
  mean_ctr /= static_cast<double>(world.num_pairs());
  return json{
      {"world_config", world_cfg},
      {"world_seed", world.seed},
      {"num_pairs", world.num_pairs()},
      {"num_feature_categories", world.num_feature_categories},
      {"mean_true_ctr", mean_ctr},
      {"oracle_cvr_expectation", synth::oracle_cvr_expectation(world)},
      {"ctr_cvr_correlation", synth::ctr_cvr_correlation(world)},
  };
}

synth::SyntheticWorld world_from_summary(const std::string& path) {
  const json doc = read_json(path);
  json wrapped = json::object();
  wrapped["world"] = doc.at("world_config");
  wrapped["world_seed"] = doc.at("world_seed");
  const config::ExperimentConfig cfg = config::parse(wrapped);
  return synth::generate_world(cfg.world, cfg.world_seed);
}

int cmd_simulate(const config::ExperimentConfig& config,
                 const std::string& out_dir) {
  ensure_dir(out_dir);
  const synth::SyntheticWorld world =
      synth::generate_world(config.world, config.world_seed);
  const std::size_t n_pairs =
      config.data.n_pairs == 0 ? world.num_pairs() : config.data.n_pairs;
  const synth::SampledData sampled = synth::sample_dataset(
      world, n_pairs, pipeline::derive_seed(config.seeds[0], pipeline::kDataSalt));

  synth::export_dataset_csv(sampled.dataset, out_dir + "/dataset.csv");
  synth::export_side_table_csv(sampled.side, out_dir + "/side_table.csv");

  double click_rate = 0.0;
  for (const data::Row& row : sampled.dataset.rows) click_rate += row.click;
  click_rate /= static_cast<double>(sampled.dataset.rows.size());

  json summary = world_summary(world);
  summary["sampled_pairs"] = sampled.dataset.rows.size();
  summary["empirical_click_rate"] = click_rate;
  write_json(summary, out_dir + "/world.json");
  write_manifest(out_dir, "simulate");
  log::info("simulate: ", sampled.dataset.rows.size(), " rows, click rate ",
            click_rate);
  return kExitOk;
}

int cmd_train(const config::ExperimentConfig& config, const std::string& out_dir,
              const std::optional<std::string>& dataset_csv) {
  ensure_dir(out_dir);
  const std::uint64_t run_seed = config.seeds[0];

  trainer::TrainResult result;
  if (config.ingest.has_value()) {
    const ingest::LoadResult loaded =
        ingest::load_csv(config.ingest->train_csv, config.ingest->schema);
    loaded.vocab.save(out_dir + "/vocabulary.json");
    auto [train_set, val_set] =
        ingest::split(loaded.dataset, config.data.validation_fraction,
                      pipeline::derive_seed(run_seed, pipeline::kSplitSalt));
    model::ModelConfig model_config = config.model;
    model_config.num_feature_categories = loaded.dataset.num_feature_categories;
    trainer::TrainConfig train_config = config.train;
    train_config.seed = pipeline::derive_seed(run_seed, pipeline::kTrainSalt);
    result = trainer::train(train_set, val_set, model_config, train_config);
  } else if (dataset_csv.has_value()) {
    const data::Dataset dataset = ingest::load_simulated_csv(*dataset_csv);
    auto [train_set, val_set] =
        ingest::split(dataset, config.data.validation_fraction,
                      pipeline::derive_seed(run_seed, pipeline::kSplitSalt));
    model::ModelConfig model_config = config.model;
    model_config.num_feature_categories = dataset.num_feature_categories;
    trainer::TrainConfig train_config = config.train;
    train_config.seed = pipeline::derive_seed(run_seed, pipeline::kTrainSalt);
    result = trainer::train(train_set, val_set, model_config, train_config);
  } else {
    const synth::SyntheticWorld world =
        synth::generate_world(config.world, config.world_seed);
    write_json(world_summary(world), out_dir + "/world.json");
    result = pipeline::train_synthetic(world, config, run_seed);
  }

  model::save_checkpoint(result.params, out_dir + "/checkpoint.json");
  trainer::export_history_csv(result.history, out_dir + "/history.csv");
  write_json(
      json{{"variant", risks::to_string(config.train.risk.variant)},
           {"best_checkpoint", result.history.best_checkpoint},
           {"checkpoints", result.history.records.size()},
           {"zero_click_batches", result.history.zero_click_batches},
           {"aborted", result.aborted},
           {"abort_reason", result.abort_reason}},
      out_dir + "/train_summary.json");
  write_manifest(out_dir, "train");

  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason
              << " (last good checkpoint written)\n";
    return kExitRuntime;
  }
  log::info("train: best checkpoint at iteration ",
            result.history.best_checkpoint);
  return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint_path,
                 const std::string& dataset_csv,
                 const std::optional<std::string>& world_json,
                 const std::string& out_dir) {
  ensure_dir(out_dir);
  const model::ModelParams params = model::load_checkpoint(checkpoint_path);
  const data::Dataset dataset = ingest::load_simulated_csv(dataset_csv);
  if (dataset.num_feature_categories > params.config.num_feature_categories) {
    throw ConfigError("dataset vocabulary (" +
                      std::to_string(dataset.num_feature_categories) +
                      ") exceeds checkpoint vocabulary (" +
                      std::to_string(params.config.num_feature_categories) + ")");
  }
  const evaluate::EvalReport report = evaluate::evaluate_model(
      params, dataset, oracle_reference_from(world_json));
  const json doc = evaluate::to_json(report);
  write_json(doc, out_dir + "/eval_report.json");
  write_manifest(out_dir, "evaluate");
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

int cmd_diagnose(const std::vector<std::string>& checkpoint_paths,
                 const std::string& dataset_csv,
                 const std::optional<std::string>& world_json,
                 const std::string& out_dir) {
  if (checkpoint_paths.empty()) {
    throw ConfigError("diagnose: at least one checkpoint required");
  }
  ensure_dir(out_dir);
  const data::Dataset dataset = ingest::load_simulated_csv(dataset_csv);
  const auto ids = feature_lists(dataset);
  std::vector<std::uint8_t> click_flags;
  click_flags.reserve(dataset.rows.size());
  double clicked_label_sum = 0.0;
  std::size_t clicked = 0;
  for (const data::Row& row : dataset.rows) {
    click_flags.push_back(row.click);
    if (row.click) {
      clicked_label_sum += row.conversion;
      ++clicked;
    }
  }

  const std::optional<double> oracle = oracle_reference_from(world_json);
  const double reference =
      oracle.has_value()
          ? *oracle
          : (clicked > 0 ? clicked_label_sum / static_cast<double>(clicked) : 0.0);

  std::vector<causal::IebEntry> ieb_entries;
  json causal_rows = json::array();
  for (const std::string& path : checkpoint_paths) {
    const model::ModelParams params = model::load_checkpoint(path);
    const model::PredictionBatch preds = model::predict(params, ids, false);
    const std::string label = fs::path(path).stem().string();

    double mean_cvr = 0.0;
    for (double p : preds.cvr) mean_cvr += p;
    mean_cvr /= static_cast<double>(preds.cvr.size());
    ieb_entries.push_back({label, 0, mean_cvr});

    const double caliper = causal::default_caliper(preds.ctr);
    const causal::MatchedSample matched =
        causal::psm_match(preds.ctr, click_flags, caliper);
    const causal::CausalStrengthReport strength =
        causal::causal_risk_ratio(matched, preds.cvr);
    causal_rows.push_back(json{{"model", label},
                               {"crr", strength.crr},
                               {"strength", strength.strength},
                               {"matched_count", strength.matched_count},
                               {"caliper", caliper},
                               {"unmatched", matched.unmatched_count}});
  }

  json ieb_rows = json::array();
  for (const causal::IebRow& row : causal::ieb_report(ieb_entries, reference)) {
    ieb_rows.push_back(json{{"model", row.label},
                            {"n_seeds", row.n_seeds},
                            {"mean_estimate", row.mean_estimate},
                            {"reference", row.reference},
                            {"bias", row.bias},
                            {"std_across_seeds", row.std_across_seeds}});
  }

  const json doc{{"reference_kind",
                  oracle.has_value() ? "oracle" : "clicked_label_mean"},
                 {"ieb", ieb_rows},
                 {"causal", causal_rows}};
  write_json(doc, out_dir + "/diagnosis.json");
  write_manifest(out_dir, "diagnose");
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

int cmd_sweep(const config::ExperimentConfig& config, const std::string& param,
              const std::vector<double>& grid, unsigned jobs,
              const std::string& out_dir) {
  ensure_dir(out_dir);
  const causal::SweepParam sweep_param = causal::sweep_param_from_string(param);
  std::vector<double> sorted_grid = grid;
  if (sorted_grid.empty()) {
    sorted_grid = {0.0, 0.1, 0.5, 1.0, 2.0, 3.0};
  }
  if (!std::is_sorted(sorted_grid.begin(), sorted_grid.end())) {
    throw ConfigError("sweep: --grid values must be ascending");
  }
  const std::vector<causal::SweepCell> cells =
      causal::sweep(sweep_param, sorted_grid, config, config.seeds, jobs);
  causal::export_sweep_csv(sweep_param, cells, out_dir + "/sweep.csv");

  json errors = json::array();
  for (const causal::SweepCell& cell : cells) {
    if (cell.failed) {
      errors.push_back(json{
          {"value", cell.value}, {"seed", cell.seed}, {"error", cell.error}});
    }
  }
  write_json(json{{"param", param},
                  {"grid", sorted_grid},
                  {"cells", cells.size()},
                  {"failed", errors}},
             out_dir + "/sweep_summary.json");
  write_manifest(out_dir, "sweep");
  log::info("sweep: ", cells.size(), " cells written");
  return kExitOk;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Counterfactual multi-task conversion-rate estimators on "
               "synthetic worlds with known ground truth"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  unsigned jobs = 1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* cfg_opt = sub->add_option("--config", config_path, "experiment config JSON");
    if (needs_config) cfg_opt->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_override, "override the config seed list");
    return sub;
  };

  auto* simulate = add_common(app.add_subcommand("simulate", "generate a world and sample a dataset"), true);
  auto* train = add_common(app.add_subcommand("train", "train one estimator variant"), true);
  std::string train_data_csv;
  train->add_option("--data", train_data_csv, "train from an exported dataset CSV");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  std::string checkpoint_path, eval_data_csv, eval_world_json;
  evaluate_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  evaluate_cmd->add_option("--data", eval_data_csv, "dataset CSV")->required();
  evaluate_cmd->add_option("--world", eval_world_json, "world summary JSON for the oracle reference");
  evaluate_cmd->add_option("--out", out_dir, "output directory");

  auto* diagnose = app.add_subcommand("diagnose", "bias and causal-strength reports");
  std::vector<std::string> diag_checkpoints;
  std::string diag_data_csv, diag_world_json;
  diagnose->add_option("--checkpoints", diag_checkpoints, "checkpoint JSON files")->required();
  diagnose->add_option("--data", diag_data_csv, "dataset CSV")->required();
  diagnose->add_option("--world", diag_world_json, "world summary JSON for the oracle reference");
  diagnose->add_option("--out", out_dir, "output directory");

  auto* sweep_cmd = add_common(app.add_subcommand("sweep", "retrain across a lambda grid"), true);
  std::string sweep_parameter = "lambda_c";
  std::vector<double> sweep_grid;
  sweep_cmd->add_option("--param", sweep_parameter, "lambda_c or lambda_g");
  sweep_cmd->add_option("--grid", sweep_grid, "grid values (default 0,0.1,0.5,1,2,3)");
  sweep_cmd->add_option("--jobs", jobs, "parallel training jobs");

  app.add_subcommand("config-reference", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto load_config = [&]() {
    config::ExperimentConfig cfg = config::load_file(config_path);
    if (seed_override.has_value()) cfg.seeds = {*seed_override};
    if (out_dir.empty()) out_dir = cfg.output_dir;
    return cfg;
  };

  if (app.got_subcommand("config-reference")) {
    std::cout << config::reference_text();
    return kExitOk;
  }
  if (app.got_subcommand(simulate)) {
    return guard([&] { return cmd_simulate(load_config(), out_dir); });
  }
  if (app.got_subcommand(train)) {
    return guard([&] {
      std::optional<std::string> data_csv;
      if (!train_data_csv.empty()) data_csv = train_data_csv;
      return cmd_train(load_config(), out_dir, data_csv);
    });
  }
  if (app.got_subcommand(evaluate_cmd)) {
    return guard([&] {
      if (out_dir.empty()) out_dir = ".";
      std::optional<std::string> world;
      if (!eval_world_json.empty()) world = eval_world_json;
      return cmd_evaluate(checkpoint_path, eval_data_csv, world, out_dir);
    });
  }
  if (app.got_subcommand(diagnose)) {
    return guard([&] {
      if (out_dir.empty()) out_dir = ".";
      std::optional<std::string> world;
      if (!diag_world_json.empty()) world = diag_world_json;
      return cmd_diagnose(diag_checkpoints, diag_data_csv, world, out_dir);
    });
  }
  if (app.got_subcommand(sweep_cmd)) {
    return guard([&] {
      return cmd_sweep(load_config(), sweep_parameter, sweep_grid, jobs, out_dir);
    });
  }
  return kExitConfig;
}

}  // namespace escm::cli
