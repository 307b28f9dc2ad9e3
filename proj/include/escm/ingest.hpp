// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0
//
// Loaders for impression-log CSVs. Two formats are understood:
//   - the simulator's own export: pair_id,feature_ids,o,r (ids ';'-joined)
//   - a flat schema with one integer-coded categorical column per feature,
//     plus binary click and conversion columns
// Flat-schema codes are remapped to a dense index space; index 0 is reserved
// for out-of-vocabulary codes seen at evaluation time. The remapping is a
// bijection and can be saved/loaded as a JSON sidecar.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "escm/dataset.hpp"

namespace escm::ingest {

struct IngestSchema {
  std::vector<std::string> feature_columns;
  std::string click_column = "click";
  std::string conversion_column = "conversion";
  char delimiter = ',';

  void validate() const;
};

struct Vocabulary {
  // per feature column: original code -> dense index (>= 1; 0 is OOV)
  std::vector<std::unordered_map<std::int64_t, std::uint32_t>> per_column;

  std::uint32_t next_index = 1;
  std::uint32_t size() const { return next_index; }  // includes the OOV slot

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path,
                         const IngestSchema& schema);
};

struct LoadReport {
  std::size_t rows_loaded = 0;
  std::size_t rows_rejected_label = 0;  // conversion without click
  std::size_t rows_malformed = 0;
  std::vector<std::string> row_errors;  // capped per-row diagnostics
};

struct LoadResult {
  data::Dataset dataset;
  Vocabulary vocab;
  LoadReport report;
};

/// Loads a flat-schema CSV, building the vocabulary as it goes.
/// Rows with conversion=1, click=0 are rejected and counted. Malformed rows
/// are recorded; more than 1% malformed rows fails the whole file.
LoadResult load_csv(const std::string& path, const IngestSchema& schema);

/// Loads a flat-schema CSV against a frozen vocabulary (evaluation-time);
/// unseen codes map to the OOV index 0.
LoadResult load_csv_with_vocab(const std::string& path,
                               const IngestSchema& schema,
                               const Vocabulary& vocab);

/// Loads the simulator's export format (pair_id,feature_ids,o,r).
data::Dataset load_simulated_csv(const std::string& path);

/// Loads a side table (pair_id,r_counterfactual).
data::SideTable load_side_table_csv(const std::string& path);

/// Seeded uniform split into (train, validation); disjoint and exhaustive.
/// validation_fraction must lie in (0,1).
std::pair<data::Dataset, data::Dataset> split(const data::Dataset& dataset,
                                              double validation_fraction,
                                              std::uint64_t seed);

}  // namespace escm::ingest
