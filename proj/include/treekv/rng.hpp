// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

namespace treekv {

/// SplitMix64 generator. The recurrence is pinned bit-exactly because weight
/// files and synthetic token streams are reproduced from it:
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Independent child stream seeded from the next output.
  SplitMix64 split() noexcept { return SplitMix64(next()); }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

/// Standard normal variates by the Marsaglia polar method on top of
/// SplitMix64. Each accepted pair (u, v) yields u*f first, then v*f on the
/// following call.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) noexcept : rng_(seed) {}

  double next() noexcept {
    if (spare_) {
      const double out = *spare_;
      spare_.reset();
      return out;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * rng_.uniform() - 1.0;
      v = 2.0 * rng_.uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    return u * f;
  }

 private:
  SplitMix64 rng_;
  std::optional<double> spare_;
};

/// Seed of the synthetic token stream derived from a run seed. Kept distinct
/// from the weight stream so changing the model size does not shift tokens.
inline std::uint64_t token_stream_seed(std::uint64_t seed) noexcept {
  return SplitMix64(seed ^ 0x544F4B454E53ULL).next();
}

}  // namespace treekv
