// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treekv/error.hpp"

namespace treekv {

/// Per-slot attention statistics kept parallel to a cache: cumulative
/// attention mass S and residency count C. Slot i here is slot i there.
class ImportanceTracker {
 public:
  std::size_t size() const noexcept { return cumulative_.size(); }

  std::span<const double> cumulative() const noexcept { return cumulative_; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  /// Adds a slot for a newly appended token. Non-zero arguments install
  /// frozen statistics (used when scores are precomputed).
  void push(double cumulative = 0.0, std::uint64_t count = 0) {
    cumulative_.push_back(cumulative);
    counts_.push_back(count);
  }

  /// S += row, C += 1 over every resident slot.
  void update(std::span<const double> row) {
    if (row.size() != size()) {
      throw DimensionError("attention row has " + std::to_string(row.size()) +
                           " entries for " + std::to_string(size()) + " tracked slots");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      cumulative_[i] += row[i];
      counts_[i] += 1;
    }
  }

  void erase(std::size_t slot) {
    if (slot >= size()) throw StateError("tracker erase beyond size");
    const auto offset = static_cast<std::ptrdiff_t>(slot);
    cumulative_.erase(cumulative_.begin() + offset);
    counts_.erase(counts_.begin() + offset);
  }

  double averaged(std::size_t slot) const {
    if (counts_[slot] == 0) {
      throw InvariantError("averaged score requested for slot " + std::to_string(slot) +
                           " with zero residency");
    }
    return cumulative_[slot] / static_cast<double>(counts_[slot]);
  }

  /// S / C elementwise.
  std::vector<double> averaged() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = averaged(i);
    return out;
  }

 private:
  std::vector<double> cumulative_;
  std::vector<std::uint64_t> counts_;
};

/// Appends a zero slot and accumulates `row`, which must cover the new slot.
inline void update_scores(ImportanceTracker& tracker, std::span<const double> row) {
  if (row.size() != tracker.size() + 1) {
    throw DimensionError("attention row must cover the newly appended slot");
  }
  tracker.push();
  tracker.update(row);
}

}  // namespace treekv
