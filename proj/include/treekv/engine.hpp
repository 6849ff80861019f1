// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treekv/attention.hpp"
#include "treekv/error.hpp"
#include "treekv/policies.hpp"
#include "treekv/rng.hpp"
#include "treekv/tracker.hpp"
#include "treekv/weights.hpp"

namespace treekv {

/// Input tokens: ids looked up in the embedding table, or raw embeddings.
struct TokenStream {
  std::vector<std::size_t> ids;
  std::vector<Vector> embeddings;

  std::size_t size() const noexcept { return ids.empty() ? embeddings.size() : ids.size(); }

  bool operator==(const TokenStream&) const = default;
};

/// Seeded synthetic stream: ids uniform over the vocabulary when the model
/// has one, otherwise standard-normal embeddings of width d_model.
inline TokenStream synthetic_tokens(std::uint64_t seed, const ModelDims& dims,
                                    std::size_t length) {
  TokenStream out;
  if (dims.vocab > 0) {
    SplitMix64 rng(token_stream_seed(seed));
    out.ids.reserve(length);
    for (std::size_t t = 0; t < length; ++t) out.ids.push_back(rng.next() % dims.vocab);
  } else {
    NormalStream normals(token_stream_seed(seed));
    out.embeddings.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
      Vector x(dims.d_model);
      for (double& v : x) v = normals.next();
      out.embeddings.push_back(std::move(x));
    }
  }
  return out;
}

inline void check_tokens(const ModelWeights& w, const TokenStream& tokens) {
  for (std::size_t id : tokens.ids) {
    if (id >= w.dims.vocab) throw InputError("token id " + std::to_string(id) + " >= vocab");
  }
}

inline Vector embed(const ModelWeights& w, const TokenStream& tokens, std::size_t t) {
  if (!tokens.ids.empty()) {
    const std::size_t id = tokens.ids.at(t);
    if (id >= w.dims.vocab) throw InputError("token id " + std::to_string(id) + " >= vocab");
    const auto row = w.embedding.row(id);
    return Vector(row.begin(), row.end());
  }
  const Vector& x = tokens.embeddings.at(t);
  if (x.size() != w.dims.d_model) throw DimensionError("embedding width != d_model");
  return x;
}

struct DecodeOptions {
  PolicyKind policy = PolicyKind::kFull;
  std::size_t capacity = 0;  // ignored by the full policy
  ProtectedZones zones;
  bool keep_retained = true;   // retained positions after every step
  bool keep_attention = false;  // attention rows after every step
  bool keep_outputs = false;    // final residual vector of every step
  std::size_t analysis_step = 0;  // 1-based step that also records values; 0 = none
};

/// One (layer, head) at one step. `attention` and `values` describe the cache
/// before this step's eviction; `retained` describes it after.
struct StreamStep {
  std::vector<std::size_t> retained;
  Vector attention;
  std::vector<Vector> values;
  std::optional<EvictionEvent> eviction;
};

struct StepRecord {
  std::size_t step = 0;      // 1-based
  std::size_t position = 0;  // 0-based original position of the token
  std::vector<StreamStep> streams;  // layer-major: index = layer * heads + head
  Vector output;
  std::optional<double> nll;  // -log p(next token), when the model has a vocabulary
};

struct DecodeTrace {
  ModelDims dims;
  DecodeOptions options;
  std::size_t length = 0;
  std::vector<StepRecord> steps;
  std::vector<std::vector<std::size_t>> final_retained;  // per stream
};

/// Incremental decoder: each (layer, head) owns a cache, a tracker and an
/// evictor. Layers are chained through a residual connection
/// x <- x + concat(head outputs) * W_O.
class Decoder {
 public:
  Decoder(const ModelWeights& weights, const DecodeOptions& options)
      : weights_(&weights), options_(options) {
    parameter_count(weights.dims);
    const std::size_t streams = weights.dims.layers * weights.dims.heads;
    streams_.reserve(streams);
    for (std::size_t i = 0; i < streams; ++i) {
      streams_.push_back(Stream{KVCache(weights.dims.d_head), ImportanceTracker{},
                                Evictor(options.policy, options.capacity, options.zones)});
    }
  }

  std::size_t stream_count() const noexcept { return streams_.size(); }
  const KVCache& cache(std::size_t layer, std::size_t head) const {
    return streams_.at(layer * weights_->dims.heads + head).cache;
  }
  const ImportanceTracker& tracker(std::size_t layer, std::size_t head) const {
    return streams_.at(layer * weights_->dims.heads + head).tracker;
  }
  const Evictor& evictor(std::size_t layer, std::size_t head) const {
    return streams_.at(layer * weights_->dims.heads + head).evictor;
  }

  /// Runs one token through every layer and returns the step record. The
  /// residual output is always filled in; callers drop what they do not keep.
  StepRecord step(std::span<const double> x_in, std::size_t position, bool capture_values) {
    const ModelDims& d = weights_->dims;
    if (x_in.size() != d.d_model) throw DimensionError("token embedding width != d_model");
    StepRecord rec;
    rec.step = ++steps_;
    rec.position = position;
    rec.streams.resize(streams_.size());
    Vector x(x_in.begin(), x_in.end());
    Vector concat(d.heads * d.d_head);
    for (std::size_t layer = 0; layer < d.layers; ++layer) {
      const LayerWeights& lw = weights_->layers[layer];
      for (std::size_t head = 0; head < d.heads; ++head) {
        Stream& s = streams_[layer * d.heads + head];
        StreamStep& out = rec.streams[layer * d.heads + head];
        ProjectedStep p = project(x, lw.heads[head]);
        s.cache.append(std::move(p.k), std::move(p.v), position);
        s.tracker.push();
        AttentionResult att = attend_positional(p.q, s.cache);
        s.tracker.update(att.weights);
        std::copy(att.output.begin(), att.output.end(),
                  concat.begin() + static_cast<std::ptrdiff_t>(head * d.d_head));
        if (capture_values) {
          out.values.assign(s.cache.values().begin(), s.cache.values().end());
        }
        out.eviction = s.evictor.maybe_evict(s.cache, s.tracker, att.weights);
        out.attention = std::move(att.weights);
        out.retained.assign(s.cache.positions().begin(), s.cache.positions().end());
      }
      const Vector mixed = row_times(concat, lw.output);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] += mixed[j];
    }
    rec.output = std::move(x);
    return rec;
  }

 private:
  struct Stream {
    KVCache cache;
    ImportanceTracker tracker;
    Evictor evictor;
  };

  const ModelWeights* weights_;
  DecodeOptions options_;
  std::vector<Stream> streams_;
  std::size_t steps_ = 0;
};

/// -log softmax(x * W_U)[target].
inline double next_token_nll(const ModelWeights& w, std::span<const double> x,
                             std::size_t target) {
  const Vector logits = row_times(x, w.unembedding);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - peak);
  return -(logits.at(target) - peak - std::log(total));
}

using StepCallback = std::function<void(const StepRecord&)>;

/// Full decoding loop: project, append, attend, update scores, evict when
/// over capacity, advance the cursor. Every step is passed to `on_step`
/// (when set) before being thinned according to the options and stored.
inline DecodeTrace decode_with_policy(const ModelWeights& weights, const TokenStream& tokens,
                                      const DecodeOptions& options,
                                      const StepCallback& on_step = {}) {
  Decoder decoder(weights, options);
  DecodeTrace trace;
  trace.dims = weights.dims;
  trace.options = options;
  trace.length = tokens.size();
  const bool with_vocab = weights.dims.vocab > 0 && !tokens.ids.empty();
  check_tokens(weights, tokens);
  auto flush = [&](StepRecord& rec) {
    if (on_step) on_step(rec);
    for (StreamStep& s : rec.streams) {
      if (!options.keep_retained) s.retained.clear();
      if (!options.keep_attention && rec.step != options.analysis_step) s.attention.clear();
    }
    if (!options.keep_outputs) rec.output.clear();
    trace.steps.push_back(std::move(rec));
  };
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Vector x = embed(weights, tokens, t);
    StepRecord rec = decoder.step(x, t, options.analysis_step == t + 1);
    if (with_vocab && t + 1 < tokens.size()) {
      rec.nll = next_token_nll(weights, rec.output, tokens.ids[t + 1]);
    }
    if (t + 1 == tokens.size()) {
      for (const StreamStep& s : rec.streams) trace.final_retained.push_back(s.retained);
    }
    flush(rec);
  }
  return trace;
}

}  // namespace treekv
