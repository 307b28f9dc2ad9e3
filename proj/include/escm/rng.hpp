// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace escm::rng {

// splitmix64 step. Small, fast, and portable across platforms, which is what
// the determinism contracts in this project actually require (std::<random>
// distributions are implementation-defined).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Keyed counter-style random stream. `fork(key)` derives an independent
/// substream, so per-row draws can be keyed by (seed, pair_id) and produce
/// identical values no matter the generation order.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(mix(seed)) {}

  Stream fork(std::uint64_t key) const {
    std::uint64_t s = state_ ^ (0x9e3779b97f4a7c15ULL + key * 0xd1342543de82ef95ULL);
    return Stream(FromState{}, mix(s));
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; one value per call, pair cached.
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  struct FromState {};
  Stream(FromState, std::uint64_t raw) : state_(raw) {}
  static std::uint64_t mix(std::uint64_t s) {
    splitmix64(s);
    return s;
  }

  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Fisher-Yates shuffle driven by a Stream.
template <typename T>
void shuffle(std::vector<T>& items, Stream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace escm::rng
