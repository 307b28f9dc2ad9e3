// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/cli.hpp"

int main(int argc, char** argv) { return escm::cli::run(argc, argv); }
