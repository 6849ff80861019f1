// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "treekv/error.hpp"

namespace treekv::wavelet {

using Signal = std::vector<double>;

inline constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;

/// One analysis step.
struct HaarPair {
  Signal approx;
  Signal detail;
};

/// Coefficients [A_L, D_L, ..., D_1]. `details[0]` is D_L and
/// `details[L-1]` is D_1.
struct WaveletCoeffs {
  std::size_t length = 0;  // samples in the analysed signal
  Signal approx;
  std::vector<Signal> details;

  std::size_t levels() const noexcept { return details.size(); }

  /// D_level for level in 1..L.
  const Signal& detail(std::size_t level) const { return details.at(levels() - level); }
  Signal& detail(std::size_t level) { return details.at(levels() - level); }
};

/// Selects A_L or one D_l of a decomposition.
struct Band {
  enum class Kind { kApprox, kDetail };
  Kind kind = Kind::kDetail;
  std::size_t level = 1;  // ignored for kApprox

  static Band approximation() { return {Kind::kApprox, 0}; }
  static Band detail(std::size_t level) { return {Kind::kDetail, level}; }

  std::string label(std::size_t levels) const {
    return kind == Kind::kApprox ? "A" + std::to_string(levels) : "D" + std::to_string(level);
  }
};

/// Haar analysis: A[n] = (s[2n] + s[2n+1]) / sqrt2 and
/// D[n] = (s[2n] - s[2n+1]) / sqrt2 (0-based). An odd trailing sample is
/// paired with an implicit zero.
inline HaarPair dwt_single(std::span<const double> s) {
  if (s.empty()) throw InputError("wavelet decomposition of an empty signal");
  const std::size_t half = (s.size() + 1) / 2;
  HaarPair out{Signal(half), Signal(half)};
  for (std::size_t n = 0; n < half; ++n) {
    const double even = s[2 * n];
    const double odd = 2 * n + 1 < s.size() ? s[2 * n + 1] : 0.0;
    out.approx[n] = kInvSqrt2 * (even + odd);
    out.detail[n] = kInvSqrt2 * (even - odd);
  }
  return out;
}

/// Deepest level accepted for a signal of `length` samples: 2^L <= length.
inline std::size_t max_levels(std::size_t length) {
  std::size_t levels = 0;
  while (length >= (std::size_t{2} << levels)) ++levels;
  return levels;
}

inline WaveletCoeffs dwt_multi(std::span<const double> s, std::size_t levels) {
  if (s.empty()) throw InputError("wavelet decomposition of an empty signal");
  if (levels < 1) throw LevelError("decomposition needs at least one level");
  if (levels > max_levels(s.size())) {
    throw LevelError(std::to_string(levels) + " levels requested for " +
                     std::to_string(s.size()) + " samples (need 2^L <= N)");
  }
  WaveletCoeffs out;
  out.length = s.size();
  out.details.resize(levels);
  Signal current(s.begin(), s.end());
  for (std::size_t level = 1; level <= levels; ++level) {
    HaarPair step = dwt_single(current);
    out.details[levels - level] = std::move(step.detail);
    current = std::move(step.approx);
  }
  out.approx = std::move(current);
  return out;
}

/// Synthesis step: out[2n] = (A[n] + D[n]) / sqrt2, out[2n+1] = (A[n] - D[n]) / sqrt2.
inline Signal reconstruct_single(std::span<const double> approx, std::span<const double> detail) {
  if (approx.size() != detail.size()) {
    throw DimensionError("approximation and detail lengths differ");
  }
  Signal out(2 * approx.size());
  for (std::size_t n = 0; n < approx.size(); ++n) {
    out[2 * n] = kInvSqrt2 * (approx[n] + detail[n]);
    out[2 * n + 1] = kInvSqrt2 * (approx[n] - detail[n]);
  }
  return out;
}

namespace detail {

// Input length at each level: lengths[0] = N, lengths[l] = ceil(lengths[l-1] / 2).
inline std::vector<std::size_t> level_lengths(std::size_t length, std::size_t levels) {
  std::vector<std::size_t> lengths{length};
  for (std::size_t l = 0; l < levels; ++l) lengths.push_back((lengths.back() + 1) / 2);
  return lengths;
}

inline Signal synthesize(const WaveletCoeffs& c, const Signal& approx,
                         const std::vector<const Signal*>& details) {
  const auto lengths = level_lengths(c.length, c.levels());
  Signal current = approx;
  for (std::size_t level = c.levels(); level >= 1; --level) {
    current = reconstruct_single(current, *details[c.levels() - level]);
    current.resize(lengths[level - 1]);
  }
  return current;
}

}  // namespace detail

/// Inverse of dwt_multi.
inline Signal reconstruct(const WaveletCoeffs& c) {
  std::vector<const Signal*> details;
  for (const auto& d : c.details) details.push_back(&d);
  return detail::synthesize(c, c.approx, details);
}

/// Rec(band): synthesis with every other band zeroed.
inline Signal reconstruct_component(const WaveletCoeffs& c, Band band) {
  if (band.kind == Band::Kind::kDetail && (band.level < 1 || band.level > c.levels())) {
    throw SelectorError("band D" + std::to_string(band.level) + " not in a " +
                        std::to_string(c.levels()) + "-level decomposition");
  }
  std::vector<Signal> zeroed;
  zeroed.reserve(c.levels());
  for (const auto& d : c.details) zeroed.emplace_back(d.size(), 0.0);
  Signal approx(c.approx.size(), 0.0);
  if (band.kind == Band::Kind::kApprox) {
    approx = c.approx;
  } else {
    zeroed[c.levels() - band.level] = c.detail(band.level);
  }
  std::vector<const Signal*> details;
  for (const auto& d : zeroed) details.push_back(&d);
  return detail::synthesize(c, approx, details);
}

}  // namespace treekv::wavelet
