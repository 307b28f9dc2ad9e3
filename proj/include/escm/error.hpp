// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace escm {

/// Invalid configuration supplied by the user (bad key, out-of-range value).
/// Maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller violated a documented precondition.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Tensor shape mismatch in the compute layer.
struct DimensionError : std::logic_error {
  explicit DimensionError(const std::string& msg) : std::logic_error(msg) {}
};

/// Numerical failure at runtime (NaN/Inf, log of zero, diverged training).
/// Maps to CLI exit code 2.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric has no defined value on the given input (e.g. single-class AUC).
struct UndefinedMetricError : std::runtime_error {
  explicit UndefinedMetricError(const std::string& msg)
      : std::runtime_error(msg) {}
};

/// File-level ingestion failure (unreadable, schema mismatch, too many bad rows).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace escm
