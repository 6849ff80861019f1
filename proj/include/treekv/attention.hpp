// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "treekv/error.hpp"
#include "treekv/weights.hpp"

namespace treekv {

using Vector = std::vector<double>;

/// Query, key and value of one token for one head.
struct ProjectedStep {
  Vector q;
  Vector k;
  Vector v;
};

/// Row vector times matrix: out[j] = sum_i x[i] * m(i, j).
inline Vector row_times(std::span<const double> x, const Matrix& m) {
  if (x.size() != m.rows()) {
    throw DimensionError("vector length " + std::to_string(x.size()) +
                         " does not match matrix rows " + std::to_string(m.rows()));
  }
  Vector out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += xi * static_cast<double>(row[j]);
  }
  return out;
}

inline ProjectedStep project(std::span<const double> x, const HeadWeights& head) {
  return {row_times(x, head.query), row_times(x, head.key), row_times(x, head.value)};
}

/// Rotary phase rotation of adjacent pairs (2i, 2i+1) with angle
/// position * 10000^(-2i/d). A trailing odd dimension is left untouched.
inline Vector rotate(std::span<const double> x, std::size_t position) {
  Vector out(x.begin(), x.end());
  if (position == 0) return out;
  const std::size_t d = x.size();
  const auto p = static_cast<double>(position);
  for (std::size_t i = 0; i + 1 < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
    const double angle = p * freq;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    out[i] = x[i] * c - x[i + 1] * s;
    out[i + 1] = x[i] * s + x[i + 1] * c;
  }
  return out;
}

/// Evictable key/value cache of one (layer, head). Slots stay in arrival
/// order; original positions are strictly increasing.
class KVCache {
 public:
  KVCache() = default;
  explicit KVCache(std::size_t d_head) : d_head_(d_head) {}

  std::size_t size() const noexcept { return positions_.size(); }
  bool empty() const noexcept { return positions_.empty(); }
  std::size_t d_head() const noexcept { return d_head_; }

  std::span<const Vector> keys() const noexcept { return keys_; }
  std::span<const Vector> values() const noexcept { return values_; }
  std::span<const std::size_t> positions() const noexcept { return positions_; }

  void append(Vector key, Vector value, std::size_t original_position) {
    if (d_head_ == 0) d_head_ = key.size();
    if (key.size() != d_head_ || value.size() != d_head_) {
      throw DimensionError("key/value length does not match d_head " + std::to_string(d_head_));
    }
    if (!positions_.empty() && original_position <= positions_.back()) {
      throw OrderingError("appending position " + std::to_string(original_position) +
                          " after " + std::to_string(positions_.back()));
    }
    keys_.push_back(std::move(key));
    values_.push_back(std::move(value));
    positions_.push_back(original_position);
  }

  /// Removes the slot at 0-based index `slot`; survivors keep their order.
  void erase(std::size_t slot) {
    if (slot >= size()) throw StateError("erase of slot beyond cache size");
    const auto offset = static_cast<std::ptrdiff_t>(slot);
    keys_.erase(keys_.begin() + offset);
    values_.erase(values_.begin() + offset);
    positions_.erase(positions_.begin() + offset);
  }

 private:
  std::size_t d_head_ = 0;
  std::vector<Vector> keys_;
  std::vector<Vector> values_;
  std::vector<std::size_t> positions_;
};

/// Keys and query after position re-assignment. Encoding positions come from
/// the slot index in the cache, never from the original token position.
struct EncodedStep {
  std::vector<Vector> keys;
  Vector query;
  std::vector<std::size_t> key_positions;
  std::size_t query_position = 0;
};

/// Rotates cached key i by slot index i and the query by `query_slot`. The
/// cache itself is not modified.
inline EncodedStep apply_positions(const KVCache& cache, std::span<const double> query,
                                   std::size_t query_slot) {
  EncodedStep out;
  out.keys.reserve(cache.size());
  out.key_positions.reserve(cache.size());
  for (std::size_t i = 0; i < cache.size(); ++i) {
    out.keys.push_back(rotate(cache.keys()[i], i));
    out.key_positions.push_back(i);
  }
  out.query = rotate(query, query_slot);
  out.query_position = query_slot;
  return out;
}

struct AttentionResult {
  Vector weights;  // softmax row, one entry per slot
  Vector output;   // weighted sum of values
};

/// Scaled dot-product attention of one query over explicit keys/values, with
/// 1/sqrt(d_head) scaling.
inline AttentionResult attend(std::span<const double> q, std::span<const Vector> keys,
                              std::span<const Vector> values) {
  if (keys.empty()) throw StateError("attention over an empty cache");
  if (keys.size() != values.size()) throw DimensionError("key/value count mismatch");
  const std::size_t d = q.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionResult r;
  r.weights.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].size() != d) throw DimensionError("key length does not match query");
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += q[j] * keys[i][j];
    r.weights[i] = dot * scale;
  }
  const double peak = *std::max_element(r.weights.begin(), r.weights.end());
  double total = 0.0;
  for (double& w : r.weights) {
    w = std::exp(w - peak);
    total += w;
  }
  for (double& w : r.weights) w /= total;
  r.output.assign(values.front().size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < r.output.size(); ++j) r.output[j] += r.weights[i] * values[i][j];
  }
  return r;
}

/// Attention over the cache's stored keys as-is (no position encoding).
inline AttentionResult attend(std::span<const double> q, const KVCache& cache) {
  return attend(q, cache.keys(), cache.values());
}

/// Attention for the token held in the last slot: keys and query are rotated
/// by their re-assigned slot positions first.
inline AttentionResult attend_positional(std::span<const double> q, const KVCache& cache) {
  if (cache.empty()) throw StateError("attention over an empty cache");
  const EncodedStep enc = apply_positions(cache, q, cache.size() - 1);
  return attend(enc.query, enc.keys, cache.values());
}

}  // namespace treekv
