// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "treekv/attention.hpp"
#include "treekv/error.hpp"
#include "treekv/wavelet.hpp"

namespace treekv {

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Attention row and value matrix of one (layer, head) at the analysis step.
/// Channel j of the analysed signal is s[k] = attention[k] * values[k][j].
struct AnalysisSample {
  Vector attention;
  std::vector<Vector> values;
};

/// Mean |Rec(D_l)| per position for bands D_1..D_L.
struct MagnitudeProfile {
  std::size_t levels = 0;
  std::size_t length = 0;
  std::size_t exclude = 0;
  std::vector<std::size_t> positions;     // 0-based positions kept after the margins
  std::vector<std::vector<double>> mean;  // mean[l - 1][i] for band D_l at positions[i]
};

inline MagnitudeProfile magnitude_profile(std::span<const AnalysisSample> samples,
                                          std::size_t levels, std::size_t exclude) {
  if (samples.empty()) throw InputError("no analysis samples");
  const std::size_t length = samples.front().attention.size();
  if (length == 0) throw InputError("empty attention row in analysis sample");
  if (levels < 1 || levels > wavelet::max_levels(length)) {
    throw LevelError("analysis over " + std::to_string(length) + " positions cannot use " +
                     std::to_string(levels) + " levels (need 2^L <= t)");
  }
  if (2 * exclude >= length) {
    throw ConfigError("exclusion margin " + std::to_string(exclude) + " leaves no positions of " +
                      std::to_string(length));
  }
  std::vector<std::vector<CompensatedSum>> sums(levels,
                                                std::vector<CompensatedSum>(length));
  std::size_t channels_seen = 0;
  wavelet::Signal signal(length);
  for (const AnalysisSample& sample : samples) {
    if (sample.attention.size() != length || sample.values.size() != length) {
      throw DimensionError("analysis samples must share the same step length");
    }
    const std::size_t width = sample.values.front().size();
    for (std::size_t ch = 0; ch < width; ++ch) {
      for (std::size_t k = 0; k < length; ++k) {
        if (sample.values[k].size() != width) throw DimensionError("ragged value matrix");
        signal[k] = sample.attention[k] * sample.values[k][ch];
      }
      const wavelet::WaveletCoeffs coeffs = wavelet::dwt_multi(signal, levels);
      for (std::size_t l = 1; l <= levels; ++l) {
        const auto comp = wavelet::reconstruct_component(coeffs, wavelet::Band::detail(l));
        for (std::size_t k = 0; k < length; ++k) sums[l - 1][k].add(std::abs(comp[k]));
      }
      ++channels_seen;
    }
  }
  MagnitudeProfile out;
  out.levels = levels;
  out.length = length;
  out.exclude = exclude;
  for (std::size_t k = exclude; k < length - exclude; ++k) out.positions.push_back(k);
  out.mean.assign(levels, std::vector<double>(out.positions.size()));
  const auto n = static_cast<double>(channels_seen);
  for (std::size_t l = 0; l < levels; ++l) {
    for (std::size_t i = 0; i < out.positions.size(); ++i) {
      out.mean[l][i] = sums[l][out.positions[i]].value() / n;
    }
  }
  return out;
}

/// Fraction of heads retaining each original position 0..length-1, per layer.
/// `retained` is indexed layer-major (layer * heads + head).
inline std::vector<std::vector<double>> distribution_map(
    std::span<const std::vector<std::size_t>> retained, std::size_t layers, std::size_t heads,
    std::size_t length) {
  if (retained.size() != layers * heads) {
    throw InputError("retained sets do not cover every (layer, head)");
  }
  std::vector<std::vector<double>> map(layers, std::vector<double>(length, 0.0));
  for (std::size_t layer = 0; layer < layers; ++layer) {
    std::vector<std::size_t> hits(length, 0);
    for (std::size_t head = 0; head < heads; ++head) {
      for (std::size_t pos : retained[layer * heads + head]) {
        if (pos >= length) throw InputError("retained position beyond sequence length");
        ++hits[pos];
      }
    }
    for (std::size_t p = 0; p < length; ++p) {
      map[layer][p] = static_cast<double>(hits[p]) / static_cast<double>(heads);
    }
  }
  return map;
}

/// Retained positions per sequence quartile [qT/4, (q+1)T/4).
inline std::array<std::size_t, 4> quartile_counts(std::span<const std::size_t> retained,
                                                  std::size_t length) {
  std::array<std::size_t, 4> counts{};
  for (std::size_t pos : retained) {
    if (pos >= length) throw InputError("retained position beyond sequence length");
    ++counts[std::min<std::size_t>(3, pos * 4 / length)];
  }
  return counts;
}

/// |a ∩ b| / |b| for sorted position sets.
inline double overlap_fraction(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (b.empty()) return a.empty() ? 1.0 : 0.0;
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(b.size());
}

}  // namespace treekv
