// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

namespace escm::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Controlled by the ESCM_LOG environment variable: quiet | info | debug.
inline Level level() {
  static const Level cached = [] {
    const char* env = std::getenv("ESCM_LOG");
    if (env == nullptr) return Level::info;
    const std::string v(env);
    if (v == "quiet" || v == "0") return Level::quiet;
    if (v == "debug" || v == "2") return Level::debug;
    return Level::info;
  }();
  return cached;
}

template <typename... Args>
void emit(Level at, const char* tag, const Args&... args) {
  if (level() < at) return;
  std::ostringstream out;
  out << tag;
  (out << ... << args);
  out << '\n';
  std::cerr << out.str();
}

template <typename... Args>
void info(const Args&... args) {
  emit(Level::info, "[escm] ", args...);
}

template <typename... Args>
void debug(const Args&... args) {
  emit(Level::debug, "[escm:debug] ", args...);
}

template <typename... Args>
void warn(const Args&... args) {
  emit(Level::quiet, "[escm:warn] ", args...);
}

}  // namespace escm::log
