// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treekv/analysis.hpp"
#include "treekv/engine.hpp"
#include "treekv/error.hpp"
#include "treekv/policies.hpp"
#include "treekv/prefill.hpp"
#include "treekv/weights.hpp"

namespace treekv {

using Json = nlohmann::json;

/// Every knob of an experiment. JSON keys are the field names; CLI flags use
/// the same names with dashes.
struct RunConfig {
  std::string policy = "treekv";
  std::size_t capacity = 1024;
  std::string zones = "sink=4,recent=508";
  std::size_t block_size = 32;
  std::size_t cache_blocks = 32;
  std::uint64_t seed = 0;
  std::size_t length = 4096;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t vocab = 256;
  std::size_t levels = 5;
  std::size_t exclude = 32;
  std::size_t analysis_step = 512;
  bool record_attention = false;
  std::string trace_detail = "events";  // "events": retained set on the last step only; "full": every step

  ModelDims dims() const { return {layers, heads, d_model, d_head, vocab}; }
  PolicyKind policy_kind() const { return parse_policy(policy); }
  ProtectedZones protected_zones() const { return parse_zones(zones); }
};

#define TREEKV_CONFIG_FIELDS(X)                                                          \
  X(policy) X(capacity) X(zones) X(block_size) X(cache_blocks) X(seed) X(length) X(layers) \
  X(heads) X(d_model) X(d_head) X(vocab) X(levels) X(exclude) X(analysis_step)           \
  X(record_attention) X(trace_detail)

inline Json to_json(const RunConfig& c) {
  Json j = Json::object();
#define TREEKV_PUT(name) j[#name] = c.name;
  TREEKV_CONFIG_FIELDS(TREEKV_PUT)
#undef TREEKV_PUT
  return j;
}

/// Overlays the keys present in `j` onto `c`. Unknown keys and wrong types
/// are configuration errors.
inline void merge_config(RunConfig& c, const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
#define TREEKV_NAME(name) #name,
      TREEKV_CONFIG_FIELDS(TREEKV_NAME)
#undef TREEKV_NAME
  };
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");
  }
  try {
#define TREEKV_GET(name) \
  if (j.contains(#name)) j.at(#name).get_to(c.name);
    TREEKV_CONFIG_FIELDS(TREEKV_GET)
#undef TREEKV_GET
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline RunConfig load_config(std::istream& in) {
  RunConfig c;
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  merge_config(c, j);
  return c;
}

inline DecodeOptions decode_options(const RunConfig& c) {
  DecodeOptions o;
  o.policy = c.policy_kind();
  o.capacity = c.capacity;
  o.zones = c.protected_zones();
  o.keep_retained = c.trace_detail == "full";
  o.keep_attention = c.record_attention;
  o.analysis_step = c.analysis_step;
  return o;
}

/// Checks every precondition a run depends on, naming the violated one.
inline void validate(const RunConfig& c) {
  const PolicyKind kind = c.policy_kind();
  const ProtectedZones zones = c.protected_zones();
  if (kind != PolicyKind::kFull) Evictor(kind, c.capacity, zones);
  if (c.length < 1) throw ConfigError("length must be >= 1");
  try {
    parameter_count(c.dims());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  if (c.levels < 1) throw ConfigError("levels must be >= 1");
  if (c.block_size < 1) throw ConfigError("block_size must be >= 1");
  if (c.cache_blocks < 2) throw ConfigError("cache_blocks must be >= 2");
  if (c.trace_detail != "events" && c.trace_detail != "full") {
    throw ConfigError("trace_detail must be 'events' or 'full'");
  }
}

// ---------------------------------------------------------------------------
// Formatting

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string fingerprint(const RunConfig& c, const ModelWeights& w) {
  std::ostringstream bytes;
  bytes << to_json(c).dump();
  write_weights(bytes, w);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : bytes.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex;
  hex.width(16);
  hex.fill('0');
  hex << h;
  return hex.str();
}

// ---------------------------------------------------------------------------
// Token files: {"ids": [...]} or {"embeddings": [[...], ...]}.

inline TokenStream parse_tokens(const Json& j) {
  TokenStream t;
  try {
    if (j.contains("ids")) {
      j.at("ids").get_to(t.ids);
    } else if (j.contains("embeddings")) {
      j.at("embeddings").get_to(t.embeddings);
    } else {
      throw InputError("token file needs 'ids' or 'embeddings'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed token file: ") + e.what());
  }
  if (t.size() == 0) throw InputError("token file is empty");
  return t;
}

inline TokenStream load_tokens(std::istream& in) {
  try {
    return parse_tokens(Json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("token file is not valid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trace files (JSON lines):
//   {"type":"header", "format":"treekv-trace", "version":1, "config":{...},
//    "streams":N, "fingerprint":"..."}
//   {"type":"step", "step":t, "position":p, "nll":x?, "streams":[{"layer":l,
//    "head":h, "retained":[...]?, "evicted":{"slot","position","cursor"?}|null,
//    "attention":[...]?, "values":[[...]]?}, ...]}   one per token
//   {"type":"end", "steps":T}

inline constexpr int kTraceVersion = 1;

inline Json step_to_json(const StepRecord& rec, const DecodeOptions& o, std::size_t heads,
                         bool last) {
  Json streams = Json::array();
  for (std::size_t s = 0; s < rec.streams.size(); ++s) {
    const StreamStep& ss = rec.streams[s];
    Json js = {{"layer", s / heads}, {"head", s % heads}};
    if (o.keep_retained || last) js["retained"] = ss.retained;
    if (ss.eviction) {
      Json ev = {{"slot", ss.eviction->slot}, {"position", ss.eviction->position}};
      if (ss.eviction->cursor) ev["cursor"] = *ss.eviction->cursor;
      js["evicted"] = ev;
    } else {
      js["evicted"] = nullptr;
    }
    if (o.keep_attention || rec.step == o.analysis_step) js["attention"] = ss.attention;
    if (!ss.values.empty()) js["values"] = ss.values;
    streams.push_back(std::move(js));
  }
  Json j = {{"type", "step"}, {"step", rec.step}, {"position", rec.position}};
  if (rec.nll) j["nll"] = *rec.nll;
  j["streams"] = std::move(streams);
  return j;
}

inline ModelWeights weights_for(const RunConfig& c) {
  return generate_weights(c.seed, c.dims());
}

/// decode: writes a JSON-lines trace. `tokens` defaults to the seeded stream.
inline void cmd_decode(const RunConfig& config, const ModelWeights& weights,
                       const std::optional<TokenStream>& tokens, std::ostream& out) {
  validate(config);
  if (weights.dims != config.dims()) {
    throw ConfigError("weight file dimensions differ from the config");
  }
  const TokenStream stream =
      tokens ? *tokens : synthetic_tokens(config.seed, weights.dims, config.length);
  check_tokens(weights, stream);
  RunConfig effective = config;
  effective.length = stream.size();
  const DecodeOptions options = decode_options(effective);
  Json header = {{"type", "header"},
                 {"format", "treekv-trace"},
                 {"version", kTraceVersion},
                 {"config", to_json(effective)},
                 {"streams", weights.dims.layers * weights.dims.heads},
                 {"fingerprint", fingerprint(effective, weights)}};
  out << header.dump() << '\n';
  const std::size_t total = stream.size();
  Decoder decoder(weights, options);
  for (std::size_t t = 0; t < total; ++t) {
    StepRecord rec = decoder.step(embed(weights, stream, t), t, options.analysis_step == t + 1);
    if (weights.dims.vocab > 0 && !stream.ids.empty() && t + 1 < total) {
      rec.nll = next_token_nll(weights, rec.output, stream.ids[t + 1]);
    }
    out << step_to_json(rec, options, weights.dims.heads, t + 1 == total).dump() << '\n';
  }
  out << Json{{"type", "end"}, {"steps", total}}.dump() << '\n';
  if (!out) throw InputError("failed writing trace");
}

/// Parsed trace file.
struct TraceFile {
  RunConfig config;
  std::size_t streams = 0;
  std::string fingerprint;
  std::vector<Json> steps;
};

inline TraceFile read_trace(std::istream& in) {
  TraceFile t;
  std::string line;
  bool have_header = false;
  bool have_end = false;
  std::size_t declared_steps = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (have_end) throw InputError("trace has records after its end marker");
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("trace line is not JSON: ") + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      if (j.value("format", "") != "treekv-trace" || j.value("version", 0) != kTraceVersion) {
        throw InputError("not a version-1 treekv trace");
      }
      merge_config(t.config, j.at("config"));
      t.streams = j.at("streams").get<std::size_t>();
      t.fingerprint = j.value("fingerprint", "");
      have_header = true;
    } else if (type == "step") {
      if (!have_header) throw InputError("trace step before header");
      if (j.at("step").get<std::size_t>() != t.steps.size() + 1) {
        throw InputError("trace steps out of order");
      }
      t.steps.push_back(std::move(j));
    } else if (type == "end") {
      declared_steps = j.at("steps").get<std::size_t>();
      have_end = true;
    } else {
      throw InputError("unknown trace record type '" + type + "'");
    }
  }
  if (!have_header) throw InputError("trace has no header");
  if (!have_end || declared_steps != t.steps.size() || t.steps.size() != t.config.length) {
    throw InputError("trace is truncated (" + std::to_string(t.steps.size()) + " of " +
                     std::to_string(t.config.length) + " steps)");
  }
  return t;
}

/// Final retained positions per stream, layer-major.
inline std::vector<std::vector<std::size_t>> final_retained(const TraceFile& t) {
  const Json& last = t.steps.back().at("streams");
  if (last.size() != t.streams) throw InputError("final step does not list every stream");
  std::vector<std::vector<std::size_t>> out;
  for (const Json& s : last) {
    if (!s.contains("retained")) throw InputError("final step lacks retained positions");
    out.push_back(s.at("retained").get<std::vector<std::size_t>>());
  }
  return out;
}

/// Replays eviction events and checks them against every recorded retained
/// set and the capacity bound. Returns the number of violations.
inline std::size_t verify_trace(const TraceFile& t) {
  const bool bounded = t.config.policy_kind() != PolicyKind::kFull;
  std::vector<std::vector<std::size_t>> live(t.streams);
  std::size_t violations = 0;
  for (const Json& step : t.steps) {
    const auto position = step.at("position").get<std::size_t>();
    const Json& streams = step.at("streams");
    for (std::size_t s = 0; s < t.streams; ++s) {
      auto& set = live[s];
      set.push_back(position);
      const Json& js = streams.at(s);
      if (!js.at("evicted").is_null()) {
        const auto slot = js.at("evicted").at("slot").get<std::size_t>();
        const auto pos = js.at("evicted").at("position").get<std::size_t>();
        if (slot >= set.size() || set[slot] != pos) {
          ++violations;
        } else {
          set.erase(set.begin() + static_cast<std::ptrdiff_t>(slot));
        }
      }
      if (bounded && set.size() > t.config.capacity) ++violations;
      if (js.contains("retained") && js.at("retained").get<std::vector<std::size_t>>() != set) {
        ++violations;
      }
    }
  }
  return violations;
}

/// map: per layer, the fraction of heads retaining each original position
/// at the final step. Header "layer,0,1,...,T-1".
inline void cmd_distribution_map(std::istream& trace_in, std::ostream& out) {
  const TraceFile t = read_trace(trace_in);
  const auto retained = final_retained(t);
  const auto map = distribution_map(retained, t.config.layers, t.config.heads, t.config.length);
  out << "layer";
  for (std::size_t p = 0; p < t.config.length; ++p) out << ',' << p;
  out << '\n';
  for (std::size_t layer = 0; layer < map.size(); ++layer) {
    out << layer;
    for (double v : map[layer]) out << ',' << format_double(v);
    out << '\n';
  }
}

/// Analysis samples (one per stream) recorded at the trace's analysis step.
inline std::vector<AnalysisSample> analysis_samples(const TraceFile& t) {
  const std::size_t step = t.config.analysis_step;
  if (step == 0 || step > t.steps.size()) {
    throw InputError("trace does not contain analysis step " + std::to_string(step));
  }
  std::vector<AnalysisSample> out;
  for (const Json& s : t.steps[step - 1].at("streams")) {
    if (!s.contains("values") || !s.contains("attention")) {
      throw InputError("analysis step lacks attention rows or values");
    }
    AnalysisSample sample;
    s.at("attention").get_to(sample.attention);
    s.at("values").get_to(sample.values);
    out.push_back(std::move(sample));
  }
  return out;
}

/// analyze: CSV "position,band,mean_abs_magnitude" over bands D1..DL,
/// averaged over channels, streams and every trace given.
inline void cmd_analyze(std::vector<std::istream*> traces, std::size_t levels,
                        std::size_t exclude, std::ostream& out) {
  if (traces.empty()) throw InputError("analyze needs at least one trace");
  std::vector<AnalysisSample> samples;
  for (std::istream* in : traces) {
    const TraceFile t = read_trace(*in);
    auto more = analysis_samples(t);
    samples.insert(samples.end(), std::make_move_iterator(more.begin()),
                   std::make_move_iterator(more.end()));
  }
  const MagnitudeProfile profile = magnitude_profile(samples, levels, exclude);
  out << "position,band,mean_abs_magnitude\n";
  for (std::size_t i = 0; i < profile.positions.size(); ++i) {
    for (std::size_t l = 1; l <= profile.levels; ++l) {
      out << profile.positions[i] << ",D" << l << ',' << format_double(profile.mean[l - 1][i])
          << '\n';
    }
  }
}

/// One row of the compare table.
struct CompareRow {
  std::string policy;
  std::size_t capacity = 0;
  std::string zones;
  double overlap = 0.0;
  std::array<double, 4> quartiles{};
  std::optional<double> mean_nll;
};

/// compare: decodes every config over the same model and token stream. The
/// first config is the reference for the overlap column.
inline std::vector<CompareRow> compare_runs(const std::vector<RunConfig>& configs) {
  if (configs.size() < 2) throw InputError("compare needs at least two configs");
  const RunConfig& base = configs.front();
  for (const RunConfig& c : configs) {
    validate(c);
    if (c.seed != base.seed || c.length != base.length || !(c.dims() == base.dims())) {
      throw InputError("compared configs must share seed, length and model dimensions");
    }
  }
  const ModelWeights weights = weights_for(base);
  const TokenStream tokens = synthetic_tokens(base.seed, base.dims(), base.length);
  std::vector<std::vector<std::vector<std::size_t>>> retained;
  std::vector<CompareRow> rows;
  for (const RunConfig& c : configs) {
    DecodeOptions o = decode_options(c);
    o.keep_retained = false;
    o.keep_attention = false;
    o.analysis_step = 0;
    const DecodeTrace trace = decode_with_policy(weights, tokens, o);
    CompareRow row{c.policy, c.capacity, c.zones, 0.0, {}, std::nullopt};
    for (const auto& set : trace.final_retained) {
      const auto q = quartile_counts(set, base.length);
      for (std::size_t i = 0; i < 4; ++i) row.quartiles[i] += static_cast<double>(q[i]);
    }
    for (double& q : row.quartiles) q /= static_cast<double>(trace.final_retained.size());
    CompensatedSum nll;
    std::size_t scored = 0;
    for (const StepRecord& s : trace.steps) {
      if (s.nll) {
        nll.add(*s.nll);
        ++scored;
      }
    }
    if (scored > 0) row.mean_nll = nll.value() / static_cast<double>(scored);
    retained.push_back(trace.final_retained);
    rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CompensatedSum sum;
    for (std::size_t s = 0; s < retained[i].size(); ++s) {
      sum.add(overlap_fraction(retained[i][s], retained[0][s]));
    }
    rows[i].overlap = sum.value() / static_cast<double>(retained[i].size());
  }
  return rows;
}

inline void cmd_compare(const std::vector<RunConfig>& configs, std::ostream& out) {
  out << "policy,capacity,zones,overlap,q1,q2,q3,q4,mean_nll\n";
  for (const CompareRow& r : compare_runs(configs)) {
    out << r.policy << ',' << r.capacity << ",\"" << r.zones << "\"," << format_double(r.overlap);
    for (double q : r.quartiles) out << ',' << format_double(q);
    out << ',' << (r.mean_nll ? format_double(*r.mean_nll) : std::string{}) << '\n';
  }
}

namespace detail {

inline Json ranges_json(const BlockPartition& p, const std::vector<std::size_t>& blocks) {
  Json arr = Json::array();
  for (std::size_t b : blocks) arr.push_back({p.blocks[b].begin, p.blocks[b].end});
  return arr;
}

inline Json prefill_record(const BlockPartition& p, const PrefillResult& r,
                           const std::vector<double>& scores) {
  return {{"retained", ranges_json(p, r.retained_blocks)},
          {"evicted", ranges_json(p, r.evicted_blocks)},
          {"cursor_history", r.cursor_history},
          {"retained_tokens", r.retained_tokens},
          {"block_scores", scores}};
}

}  // namespace detail

/// prefill: one JSON line per (layer, head) with the retained block ranges,
/// then a summary line. A prompt file may hold "ids"/"embeddings" (run
/// through the model) or "observation": the window's attention rows over the
/// prompt, which skips the model and yields a single stream.
inline void cmd_prefill(const RunConfig& config, const std::optional<Json>& prompt,
                        std::ostream& out) {
  validate(config);
  const std::size_t b = config.block_size;
  if (prompt && prompt->contains("observation")) {
    std::vector<Vector> rows;
    try {
      prompt->at("observation").get_to(rows);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("malformed observation rows: ") + e.what());
    }
    if (rows.empty()) throw InputError("observation rows are empty");
    const BlockPartition p = partition_blocks(rows.front().size(), b);
    if (rows.size() != p.observation_window().size()) {
      throw InputError("need one observation row per observation-window token");
    }
    const auto scores = observation_scores(rows, p);
    const PrefillResult r = treekv_prefill_compress(p, scores, config.cache_blocks);
    Json rec = detail::prefill_record(p, r, scores);
    rec["type"] = "stream";
    out << rec.dump() << '\n';
    out << Json{{"type", "summary"}, {"prompt_len", p.prompt_len}, {"block_size", b},
                {"blocks", p.blocks.size()}, {"cache_blocks", config.cache_blocks},
                {"streams", 1}, {"retained_tokens", r.retained_tokens}}
               .dump()
        << '\n';
    return;
  }
  const ModelWeights weights = weights_for(config);
  const TokenStream tokens =
      prompt ? parse_tokens(*prompt) : synthetic_tokens(config.seed, config.dims(), config.length);
  const BlockPartition p = partition_blocks(tokens.size(), b);
  const auto streams = prefill_compress(weights, tokens, b, config.cache_blocks);
  std::size_t total_tokens = 0;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    Json rec = detail::prefill_record(p, streams[s].result, streams[s].block_scores);
    rec["type"] = "stream";
    rec["layer"] = s / config.heads;
    rec["head"] = s % config.heads;
    out << rec.dump() << '\n';
    total_tokens += streams[s].result.retained_tokens;
  }
  out << Json{{"type", "summary"}, {"prompt_len", p.prompt_len}, {"block_size", b},
              {"blocks", p.blocks.size()}, {"cache_blocks", config.cache_blocks},
              {"streams", streams.size()}, {"retained_tokens", total_tokens}}
             .dump()
      << '\n';
}

}  // namespace treekv
