// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/dataset.hpp"

#include <string>
#include <unordered_set>

#include "escm/error.hpp"

namespace escm::data {

void validate(const Dataset& dataset) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(dataset.rows.size());
  for (const Row& row : dataset.rows) {
    if (row.conversion == 1 && row.click == 0) {
      throw ContractError("dataset row " + std::to_string(row.pair_id) +
                          " has conversion without click");
    }
    if (!seen.insert(row.pair_id).second) {
      throw ContractError("duplicate pair_id " + std::to_string(row.pair_id));
    }
    for (std::uint32_t id : row.feature_ids) {
      if (dataset.num_feature_categories != 0 &&
          id >= dataset.num_feature_categories) {
        throw ContractError("feature id " + std::to_string(id) +
                            " outside the declared category space");
      }
    }
  }
}

}  // namespace escm::data
