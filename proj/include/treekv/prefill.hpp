// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "treekv/engine.hpp"
#include "treekv/error.hpp"
#include "treekv/policies.hpp"

namespace treekv {

/// Half-open token range [begin, end).
struct Block {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const Block&) const = default;
};

/// Prompt tiled into blocks of `block_size`; the final (possibly short) block
/// is the observation window.
struct BlockPartition {
  std::size_t prompt_len = 0;
  std::size_t block_size = 0;
  std::vector<Block> blocks;

  const Block& observation_window() const { return blocks.back(); }
  std::size_t content_blocks() const noexcept { return blocks.size() - 1; }
};

inline BlockPartition partition_blocks(std::size_t prompt_len, std::size_t block_size) {
  if (block_size < 1) throw ConfigError("block size must be >= 1");
  if (prompt_len < block_size) {
    throw InputError("prompt of " + std::to_string(prompt_len) +
                     " tokens is shorter than one block of " + std::to_string(block_size));
  }
  BlockPartition p{prompt_len, block_size, {}};
  for (std::size_t begin = 0; begin < prompt_len; begin += block_size) {
    p.blocks.push_back({begin, std::min(begin + block_size, prompt_len)});
  }
  return p;
}

/// Block importance. Token importance is the mean attention it receives from
/// the observation-window queries; a block scores the mean over its tokens.
/// `rows` holds one causal softmax row per window query, each spanning the
/// whole prompt (zeros past the query position).
inline std::vector<double> observation_scores(std::span<const Vector> rows,
                                              const BlockPartition& partition) {
  if (rows.empty()) throw DimensionError("no observation rows");
  std::vector<double> token(partition.prompt_len, 0.0);
  for (const Vector& row : rows) {
    if (row.size() != partition.prompt_len) {
      throw DimensionError("observation row length " + std::to_string(row.size()) +
                           " != prompt length " + std::to_string(partition.prompt_len));
    }
    for (std::size_t i = 0; i < row.size(); ++i) token[i] += row[i];
  }
  const auto n_rows = static_cast<double>(rows.size());
  std::vector<double> scores;
  scores.reserve(partition.blocks.size());
  for (const Block& b : partition.blocks) {
    double sum = 0.0;
    for (std::size_t i = b.begin; i < b.end; ++i) sum += token[i] / n_rows;
    scores.push_back(sum / static_cast<double>(b.size()));
  }
  return scores;
}

struct PrefillResult {
  std::vector<std::size_t> retained_blocks;  // 0-based block indices, prompt order, incl. window
  std::vector<std::size_t> evicted_blocks;   // in eviction order
  std::vector<std::size_t> cursor_history;   // 1-based cursor per eviction
  std::size_t retained_tokens = 0;
};

/// Block-level TreeKV. Content blocks arrive in order against fixed scores;
/// once more than `cache_blocks` are held, the eviction scope at the cursor
/// drops one and the cursor advances. The observation window is kept outside
/// the budget.
inline PrefillResult treekv_prefill_compress(const BlockPartition& partition,
                                             std::span<const double> scores,
                                             std::size_t cache_blocks,
                                             TreeMode mode = TreeMode::kScore) {
  if (cache_blocks < 2) throw ConfigError("cache_blocks must be >= 2");
  if (scores.size() != partition.blocks.size()) {
    throw DimensionError("one score per block required");
  }
  PrefillResult out;
  std::vector<std::size_t> held;
  std::vector<double> held_scores;
  std::size_t cursor = 1;
  for (std::size_t block = 0; block < partition.content_blocks(); ++block) {
    held.push_back(block);
    held_scores.push_back(scores[block]);
    if (held.size() <= cache_blocks) continue;
    const std::size_t victim = treekv_choose(held_scores, cursor - 1, mode);
    out.evicted_blocks.push_back(held[victim]);
    out.cursor_history.push_back(cursor);
    held.erase(held.begin() + static_cast<std::ptrdiff_t>(victim));
    held_scores.erase(held_scores.begin() + static_cast<std::ptrdiff_t>(victim));
    cursor = advance_idx(cursor, cache_blocks);
  }
  held.push_back(partition.blocks.size() - 1);
  out.retained_blocks = std::move(held);
  for (std::size_t b : out.retained_blocks) out.retained_tokens += partition.blocks[b].size();
  return out;
}

/// Compressed cache of one (layer, head) after prefill.
struct PrefillStream {
  std::vector<double> block_scores;
  PrefillResult result;
  KVCache cache;  // survivors only; encodings follow slot order
};

/// Runs the prompt with full causal attention, scores blocks from the
/// observation window of every (layer, head), then compresses each stream.
inline std::vector<PrefillStream> prefill_compress(const ModelWeights& weights,
                                                   const TokenStream& prompt,
                                                   std::size_t block_size,
                                                   std::size_t cache_blocks) {
  const BlockPartition partition = partition_blocks(prompt.size(), block_size);
  const Block window = partition.observation_window();
  Decoder decoder(weights, DecodeOptions{});
  const std::size_t streams = weights.dims.layers * weights.dims.heads;
  std::vector<std::vector<Vector>> rows(streams);
  for (std::size_t t = 0; t < prompt.size(); ++t) {
    const StepRecord rec = decoder.step(embed(weights, prompt, t), t, false);
    if (t < window.begin) continue;
    for (std::size_t s = 0; s < streams; ++s) {
      Vector row = rec.streams[s].attention;
      row.resize(prompt.size(), 0.0);
      rows[s].push_back(std::move(row));
    }
  }
  std::vector<PrefillStream> out(streams);
  for (std::size_t s = 0; s < streams; ++s) {
    out[s].block_scores = observation_scores(rows[s], partition);
    out[s].result = treekv_prefill_compress(partition, out[s].block_scores, cache_blocks);
    const KVCache& full = decoder.cache(s / weights.dims.heads, s % weights.dims.heads);
    out[s].cache = KVCache(weights.dims.d_head);
    for (std::size_t b : out[s].result.retained_blocks) {
      for (std::size_t i = partition.blocks[b].begin; i < partition.blocks[b].end; ++i) {
        out[s].cache.append(full.keys()[i], full.values()[i], i);
      }
    }
  }
  return out;
}

}  // namespace treekv
