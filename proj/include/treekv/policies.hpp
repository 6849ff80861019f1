// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treekv/error.hpp"
#include "treekv/tracker.hpp"

namespace treekv {

enum class PolicyKind {
  kFull,        // never evicts
  kStreaming,   // attention sinks + sliding window
  kH2O,         // minimum cumulative attention
  kTova,        // minimum attention in the latest row
  kTreeKV,      // cycling eviction scope, averaged attention decides
  kTreeKVLeft,  // cycling eviction scope, always drops the left slot
};

inline PolicyKind parse_policy(std::string_view name) {
  if (name == "full") return PolicyKind::kFull;
  if (name == "streaming") return PolicyKind::kStreaming;
  if (name == "h2o") return PolicyKind::kH2O;
  if (name == "tova") return PolicyKind::kTova;
  if (name == "treekv") return PolicyKind::kTreeKV;
  if (name == "treekv-left") return PolicyKind::kTreeKVLeft;
  throw ConfigError("unknown policy '" + std::string(name) +
                    "' (expected treekv, treekv-left, streaming, h2o, tova, full)");
}

inline std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFull: return "full";
    case PolicyKind::kStreaming: return "streaming";
    case PolicyKind::kH2O: return "h2o";
    case PolicyKind::kTova: return "tova";
    case PolicyKind::kTreeKV: return "treekv";
    case PolicyKind::kTreeKVLeft: return "treekv-left";
  }
  return "unknown";
}

/// Initial (sink) and most recent tokens that no policy may evict.
struct ProtectedZones {
  std::size_t sink = 0;
  std::size_t recent = 0;

  bool operator==(const ProtectedZones&) const = default;
};

/// Parses "sink=4,recent=508". Either key may be omitted; empty means none.
inline ProtectedZones parse_zones(std::string_view text) {
  ProtectedZones zones;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("zone entry '" + std::string(item) + "' is not key=value");
    }
    const std::string_view key = item.substr(0, eq);
    const std::string_view value = item.substr(eq + 1);
    std::size_t parsed = 0;
    const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc{} || end != value.data() + value.size()) {
      throw ConfigError("zone value '" + std::string(value) + "' is not a count");
    }
    if (key == "sink") {
      zones.sink = parsed;
    } else if (key == "recent") {
      zones.recent = parsed;
    } else {
      throw ConfigError("unknown zone key '" + std::string(key) + "'");
    }
  }
  return zones;
}

inline std::string to_string(const ProtectedZones& zones) {
  return "sink=" + std::to_string(zones.sink) + ",recent=" + std::to_string(zones.recent);
}

// ---------------------------------------------------------------------------
// TreeKV cursor

enum class TreeMode { kScore, kSelectLeft };

/// Cursor over the eviction scope. `cursor` is 1-based in 1..`cycle`, where
/// `cycle` is the cache capacity, or the unprotected middle region when
/// zones are active. `offset` is the 0-based slot where the cycle starts.
struct TreeKVState {
  std::size_t cursor = 1;
  std::size_t cycle = 1;
  std::size_t offset = 0;
  TreeMode mode = TreeMode::kScore;
};

/// idx <- (idx mod c) + 1, a unit step over 1..c.
inline std::size_t advance_idx(std::size_t idx, std::size_t cycle) { return (idx % cycle) + 1; }

inline void advance_idx(TreeKVState& state) { state.cursor = advance_idx(state.cursor, state.cycle); }

/// Picks between 0-based slots `left` and `left + 1`: the right one goes
/// only when the left one scores strictly higher.
inline std::size_t treekv_choose(std::span<const double> averaged, std::size_t left,
                                 TreeMode mode) {
  if (left + 1 >= averaged.size()) throw StateError("eviction scope beyond cache");
  if (mode == TreeMode::kSelectLeft) return left;
  return averaged[left] > averaged[left + 1] ? left + 1 : left;
}

/// Anything with ordered slots that can be dropped by index.
template <typename C>
concept EvictableCache = requires(C& cache, const C& ccache, std::size_t slot) {
  { ccache.size() } -> std::convertible_to<std::size_t>;
  cache.erase(slot);
  { ccache.positions()[slot] } -> std::convertible_to<std::size_t>;
};

/// Original positions only; stands in for a KVCache when replaying scores.
class PositionCache {
 public:
  std::size_t size() const noexcept { return positions_.size(); }
  std::span<const std::size_t> positions() const noexcept { return positions_; }
  void append(std::size_t position) {
    if (!positions_.empty() && position <= positions_.back()) {
      throw OrderingError("non-monotone position " + std::to_string(position));
    }
    positions_.push_back(position);
  }
  void erase(std::size_t slot) {
    if (slot >= size()) throw StateError("erase beyond cache size");
    positions_.erase(positions_.begin() + static_cast<std::ptrdiff_t>(slot));
  }

 private:
  std::vector<std::size_t> positions_;
};

struct EvictionEvent {
  std::size_t slot = 0;                // 0-based slot removed
  std::size_t position = 0;            // original position of the removed token
  std::optional<std::size_t> cursor;  // TreeKV cursor used for the decision
};

namespace detail {

template <EvictableCache C>
EvictionEvent remove_slot(C& cache, ImportanceTracker& tracker, std::size_t slot) {
  EvictionEvent ev{slot, cache.positions()[slot], std::nullopt};
  cache.erase(slot);
  tracker.erase(slot);
  return ev;
}

// Half-open range of slots outside the protected zones.
inline std::pair<std::size_t, std::size_t> evictable_range(std::size_t slots,
                                                           const ProtectedZones& zones) {
  if (zones.sink + zones.recent >= slots) {
    throw ConfigError("protected zones leave no evictable slot");
  }
  return {zones.sink, slots - zones.recent};
}

inline std::size_t leftmost_argmin(std::span<const double> values, std::size_t begin,
                                   std::size_t end) {
  std::size_t best = begin;
  for (std::size_t i = begin + 1; i < end; ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

}  // namespace detail

/// TreeKV: one eviction from a cache holding exactly cycle + 1 slots in its
/// scoped region, then the cursor advances.
template <EvictableCache C>
EvictionEvent treekv_evict_step(C& cache, ImportanceTracker& tracker, TreeKVState& state) {
  if (cache.size() != tracker.size()) throw InvariantError("tracker out of sync with cache");
  if (state.cursor < 1 || state.cursor > state.cycle) {
    throw InvariantError("cursor outside 1..cycle");
  }
  const std::size_t left = state.offset + state.cursor - 1;
  if (left + 1 >= cache.size()) throw StateError("cache is not over capacity");
  std::size_t victim = left;
  if (state.mode == TreeMode::kScore) {
    victim = tracker.averaged(left) > tracker.averaged(left + 1) ? left + 1 : left;
  }
  EvictionEvent ev = detail::remove_slot(cache, tracker, victim);
  ev.cursor = state.cursor;
  advance_idx(state);
  return ev;
}

inline std::size_t select_streaming(std::size_t slots, const ProtectedZones& zones) {
  if (zones.sink >= slots) throw ConfigError("sink zone covers the whole cache");
  return zones.sink;
}

inline std::size_t select_h2o(std::span<const double> cumulative, const ProtectedZones& zones) {
  const auto [begin, end] = detail::evictable_range(cumulative.size(), zones);
  return detail::leftmost_argmin(cumulative, begin, end);
}

inline std::size_t select_tova(std::span<const double> last_row, const ProtectedZones& zones) {
  const auto [begin, end] = detail::evictable_range(last_row.size(), zones);
  return detail::leftmost_argmin(last_row, begin, end);
}

template <EvictableCache C>
EvictionEvent streaming_llm_evict(C& cache, ImportanceTracker& tracker,
                                  const ProtectedZones& zones) {
  return detail::remove_slot(cache, tracker, select_streaming(cache.size(), zones));
}

template <EvictableCache C>
EvictionEvent h2o_evict(C& cache, ImportanceTracker& tracker, const ProtectedZones& zones) {
  return detail::remove_slot(cache, tracker, select_h2o(tracker.cumulative(), zones));
}

template <EvictableCache C>
EvictionEvent tova_evict(C& cache, ImportanceTracker& tracker, std::span<const double> last_row,
                         const ProtectedZones& zones) {
  if (last_row.size() != cache.size()) {
    throw DimensionError("last attention row length does not match cache");
  }
  return detail::remove_slot(cache, tracker, select_tova(last_row, zones));
}

/// A policy bound to its capacity and zones, plus the TreeKV cursor. One per
/// (layer, head) stream.
class Evictor {
 public:
  Evictor(PolicyKind kind, std::size_t capacity, ProtectedZones zones = {})
      : kind_(kind), capacity_(capacity), zones_(zones) {
    if (kind_ == PolicyKind::kFull) return;
    if (capacity_ < 2) throw ConfigError("capacity must be >= 2");
    if (zones_.sink + zones_.recent > capacity_) {
      throw ConfigError("sink + recent (" + std::to_string(zones_.sink + zones_.recent) +
                        ") exceeds capacity " + std::to_string(capacity_));
    }
    if (kind_ == PolicyKind::kTreeKV || kind_ == PolicyKind::kTreeKVLeft) {
      if (zones_.sink + zones_.recent >= capacity_) {
        throw ConfigError("treekv needs at least one unprotected slot (sink + recent < capacity)");
      }
      tree_.cycle = capacity_ - zones_.sink - zones_.recent;
      tree_.offset = zones_.sink;
      tree_.mode = kind_ == PolicyKind::kTreeKV ? TreeMode::kScore : TreeMode::kSelectLeft;
    }
  }

  PolicyKind kind() const noexcept { return kind_; }
  std::size_t capacity() const noexcept { return capacity_; }
  const ProtectedZones& zones() const noexcept { return zones_; }
  const TreeKVState& tree_state() const noexcept { return tree_; }

  /// Runs after the step's append, attention and score update. Evicts one
  /// slot when the cache holds capacity + 1 entries.
  template <EvictableCache C>
  std::optional<EvictionEvent> maybe_evict(C& cache, ImportanceTracker& tracker,
                                           std::span<const double> last_row) {
    if (kind_ == PolicyKind::kFull || cache.size() <= capacity_) return std::nullopt;
    if (cache.size() != capacity_ + 1) {
      throw InvariantError("cache grew past capacity + 1");
    }
    switch (kind_) {
      case PolicyKind::kStreaming:
        return streaming_llm_evict(cache, tracker, zones_);
      case PolicyKind::kH2O:
        return h2o_evict(cache, tracker, zones_);
      case PolicyKind::kTova:
        return tova_evict(cache, tracker, last_row, zones_);
      case PolicyKind::kTreeKV:
      case PolicyKind::kTreeKVLeft:
        return treekv_evict_step(cache, tracker, tree_);
      case PolicyKind::kFull:
        break;
    }
    return std::nullopt;
  }

 private:
  PolicyKind kind_;
  std::size_t capacity_;
  ProtectedZones zones_;
  TreeKVState tree_;
};

/// Outcome of replaying a policy over an externally supplied score stream.
struct ReplayResult {
  std::vector<std::size_t> retained;  // original positions, 0-based
  std::vector<EvictionEvent> evictions;
  std::vector<std::size_t> max_slots_after_step;  // slot count after each step
};

/// Drives an Evictor with attention rows supplied by the caller. Row t must
/// have one entry per slot resident at step t (after the append).
inline ReplayResult replay_scores(PolicyKind kind, std::size_t capacity,
                                  const ProtectedZones& zones,
                                  std::span<const std::vector<double>> rows) {
  Evictor evictor(kind, capacity, zones);
  PositionCache cache;
  ImportanceTracker tracker;
  ReplayResult out;
  out.max_slots_after_step.reserve(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    cache.append(t);
    tracker.push();
    tracker.update(rows[t]);
    if (auto ev = evictor.maybe_evict(cache, tracker, rows[t])) out.evictions.push_back(*ev);
    out.max_slots_after_step.push_back(cache.size());
  }
  out.retained.assign(cache.positions().begin(), cache.positions().end());
  return out;
}

}  // namespace treekv
