// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace escm::data {

enum class Provenance { synthetic, ingested };

/// One impression. `conversion` is observable only when `click` is 1; the
/// loaders and the generator both enforce conversion <= click.
struct Row {
  std::uint64_t pair_id = 0;
  std::vector<std::uint32_t> feature_ids;
  std::uint8_t click = 0;
  std::uint8_t conversion = 0;
};

struct Dataset {
  std::vector<Row> rows;
  Provenance provenance = Provenance::synthetic;
  /// Size of the dense feature id space rows index into (model vocab).
  std::size_t num_feature_categories = 0;

  std::size_t size() const { return rows.size(); }
};

/// Counterfactual conversion labels, one per sampled pair: what the
/// conversion would have been had the pair been clicked. Produced by the
/// synthetic sampler, aligned with the dataset rows, and never fed to
/// training.
struct SideTable {
  std::vector<std::uint64_t> pair_ids;
  std::vector<std::uint8_t> r_counterfactual;

  std::size_t size() const { return pair_ids.size(); }
};

/// Throws ContractError when a dataset violates its invariants
/// (conversion without click, duplicate pair ids).
void validate(const Dataset& dataset);

}  // namespace escm::data
