// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations for tests. Nothing here calls into
// the library's cache, policy, attention or wavelet code; only the plain
// ModelWeights data structure is shared as input.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <list>
#include <set>
#include <vector>

#include "treekv/weights.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Cache simulation

struct TreeSimResult {
  std::vector<std::size_t> retained;  // 0-based original positions
  std::vector<std::size_t> cursors;   // idx at each eviction
  std::vector<std::size_t> evicted;   // original positions, in eviction order
  std::size_t max_size = 0;           // largest cache size after any step
};

// Literal replay of the decoding loop: append with S=0, C=0; C += 1 and
// S += row for every token; when over capacity compare averaged scores at
// positions idx and idx+1 (1-based within the unprotected region), drop
// idx+1 only if S̄[idx] > S̄[idx+1], then idx = (idx mod m) + 1.
// `rows[t]` lists one weight per token resident at step t (oldest first).
// With `select_left` the scores are ignored and idx is always dropped.
inline TreeSimResult tree_sim(std::size_t c, const std::vector<std::vector<double>>& rows,
                              bool select_left, std::size_t sink = 0, std::size_t recent = 0) {
  struct Token {
    std::size_t pos;
    double s;
    double n;
  };
  std::list<Token> cache;
  const std::size_t m = c - sink - recent;
  std::size_t idx = 1;
  TreeSimResult r;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    cache.push_back({t, 0.0, 0.0});
    std::size_t j = 0;
    for (Token& tok : cache) {
      tok.n += 1.0;
      tok.s += rows[t][j++];
    }
    if (cache.size() > c) {
      auto left = cache.begin();
      std::advance(left, sink + idx - 1);
      auto right = std::next(left);
      auto victim = left;
      if (!select_left && (left->s / left->n) > (right->s / right->n)) victim = right;
      r.evicted.push_back(victim->pos);
      r.cursors.push_back(idx);
      cache.erase(victim);
      idx = (idx % m) + 1;
    }
    r.max_size = std::max(r.max_size, cache.size());
  }
  for (const Token& tok : cache) r.retained.push_back(tok.pos);
  return r;
}

// Select-left run needs no scores.
inline TreeSimResult tree_sim_left(std::size_t c, std::size_t steps) {
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < steps; ++t) rows.emplace_back(std::min(t + 1, c + 1), 0.0);
  return tree_sim(c, rows, true);
}

// First `sink` plus the most recent c - sink positions after `steps` tokens.
inline std::set<std::size_t> streaming_set(std::size_t c, std::size_t sink, std::size_t steps) {
  std::set<std::size_t> out;
  if (steps <= c) {
    for (std::size_t p = 0; p < steps; ++p) out.insert(p);
    return out;
  }
  for (std::size_t p = 0; p < sink; ++p) out.insert(p);
  for (std::size_t p = steps - (c - sink); p < steps; ++p) out.insert(p);
  return out;
}

// Position with the smallest value among slots [sink, n - recent); the
// earliest position wins ties.
inline std::size_t filtered_argmin(const std::vector<double>& values,
                                   const std::vector<std::size_t>& positions, std::size_t sink,
                                   std::size_t recent) {
  std::size_t best_slot = sink;
  for (std::size_t i = sink; i + recent < values.size(); ++i) {
    if (values[i] < values[best_slot]) best_slot = i;
  }
  return positions[best_slot];
}

enum class Greedy { kCumulative, kLastRow };

struct GreedyResult {
  std::vector<std::size_t> retained;
  std::vector<std::size_t> evicted;
};

// H2O (cumulative) or TOVA (last row) replay over the same row convention
// as tree_sim.
inline GreedyResult greedy_sim(std::size_t c, const std::vector<std::vector<double>>& rows,
                               Greedy kind, std::size_t sink, std::size_t recent) {
  std::vector<std::size_t> positions;
  std::vector<double> totals;
  GreedyResult r;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    positions.push_back(t);
    totals.push_back(0.0);
    for (std::size_t i = 0; i < totals.size(); ++i) totals[i] += rows[t][i];
    if (positions.size() > c) {
      const auto& basis = kind == Greedy::kCumulative ? totals : rows[t];
      const std::size_t pos = filtered_argmin(basis, positions, sink, recent);
      const auto at = std::find(positions.begin(), positions.end(), pos) - positions.begin();
      r.evicted.push_back(pos);
      positions.erase(positions.begin() + at);
      totals.erase(totals.begin() + at);
    }
  }
  r.retained = positions;
  return r;
}

// ---------------------------------------------------------------------------
// Wavelet

// Level-by-level convolution with the Haar taps g = [√2/2, √2/2] and
// h = [-√2/2, √2/2]:  A[n] = Σ_k s[k] g[2n-k], D[n] = Σ_k s[k] h[2n-k]
// (1-based n and k, the signal zero beyond its end).
struct DwtResult {
  std::vector<double> approx;
  std::vector<std::vector<double>> details;  // details[0] = D_L ... back() = D_1
};

inline DwtResult dwt(const std::vector<double>& signal, std::size_t levels) {
  const double r = std::sqrt(2.0) / 2.0;
  auto g = [r](long i) { return (i == 0 || i == 1) ? r : 0.0; };
  auto h = [r](long i) { return i == 0 ? -r : (i == 1 ? r : 0.0); };
  DwtResult out;
  std::vector<double> x = signal;
  std::vector<std::vector<double>> ds;
  for (std::size_t l = 0; l < levels; ++l) {
    const long len = static_cast<long>(x.size());
    const long half = (len + 1) / 2;
    std::vector<double> a(static_cast<std::size_t>(half), 0.0);
    std::vector<double> d(static_cast<std::size_t>(half), 0.0);
    for (long n = 1; n <= half; ++n) {
      for (long k = 1; k <= 2 * half; ++k) {
        const double sk = k <= len ? x[static_cast<std::size_t>(k - 1)] : 0.0;
        a[static_cast<std::size_t>(n - 1)] += sk * g(2 * n - k);
        d[static_cast<std::size_t>(n - 1)] += sk * h(2 * n - k);
      }
    }
    ds.push_back(d);
    x = a;
  }
  out.approx = x;
  out.details.assign(ds.rbegin(), ds.rend());
  return out;
}

// Rec(D_band): zero every other band and apply the single-level inverse
// R(A, D)[n] = √2/2 (A[(n+1)/2] + D[(n+1)/2]) for odd n,
//              √2/2 (A[n/2] - D[n/2])         for even n,
// from level L down to 1. Power-of-two lengths only.
inline std::vector<double> component(const std::vector<double>& signal, std::size_t levels,
                                     std::size_t band) {
  const DwtResult c = dwt(signal, levels);
  const double r = std::sqrt(2.0) / 2.0;
  std::vector<double> a(c.approx.size(), 0.0);
  for (std::size_t l = levels; l >= 1; --l) {
    std::vector<double> d = c.details[levels - l];
    if (l != band) std::fill(d.begin(), d.end(), 0.0);
    std::vector<double> up(2 * a.size());
    for (std::size_t n = 1; n <= up.size(); ++n) {
      up[n - 1] = n % 2 == 1 ? r * (a[(n + 1) / 2 - 1] + d[(n + 1) / 2 - 1])
                             : r * (a[n / 2 - 1] - d[n / 2 - 1]);
    }
    a = up;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Dense attention

inline std::vector<double> rope(std::vector<double> x, std::size_t pos) {
  const std::size_t d = x.size();
  for (std::size_t k = 0; 2 * k + 1 < d; ++k) {
    const double theta = static_cast<double>(pos) / std::pow(10000.0, (2.0 * k) / d);
    const double a = x[2 * k];
    const double b = x[2 * k + 1];
    x[2 * k] = a * std::cos(theta) - b * std::sin(theta);
    x[2 * k + 1] = a * std::sin(theta) + b * std::cos(theta);
  }
  return x;
}

inline std::vector<double> matvec(const std::vector<double>& x, const treekv::Matrix& m) {
  std::vector<double> y(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    for (std::size_t i = 0; i < m.rows(); ++i) y[j] += x[i] * m(i, j);
  }
  return y;
}

// Residual output after the last layer for every step, recomputing the
// whole causal prefix from scratch at each step (no cache).
inline std::vector<std::vector<double>> full_attention(
    const treekv::ModelWeights& w, const std::vector<std::vector<double>>& inputs) {
  const auto& dims = w.dims;
  std::vector<std::vector<double>> outputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<std::vector<double>> h(inputs.begin(), inputs.begin() + static_cast<long>(t + 1));
    for (std::size_t l = 0; l < dims.layers; ++l) {
      std::vector<std::vector<double>> next = h;
      for (std::size_t p = 0; p <= t; ++p) {
        std::vector<double> concat;
        for (std::size_t hd = 0; hd < dims.heads; ++hd) {
          const auto& hw = w.layers[l].heads[hd];
          const auto q = rope(matvec(h[p], hw.query), p);
          std::vector<double> logits;
          for (std::size_t j = 0; j <= p; ++j) {
            const auto k = rope(matvec(h[j], hw.key), j);
            double dot = 0.0;
            for (std::size_t e = 0; e < q.size(); ++e) dot += q[e] * k[e];
            logits.push_back(dot / std::sqrt(static_cast<double>(dims.d_head)));
          }
          const double mx = *std::max_element(logits.begin(), logits.end());
          double z = 0.0;
          for (double& v : logits) z += (v = std::exp(v - mx));
          std::vector<double> o(dims.d_head, 0.0);
          for (std::size_t j = 0; j <= p; ++j) {
            const auto v = matvec(h[j], hw.value);
            for (std::size_t e = 0; e < o.size(); ++e) o[e] += logits[j] / z * v[e];
          }
          concat.insert(concat.end(), o.begin(), o.end());
        }
        const auto mixed = matvec(concat, w.layers[l].output);
        for (std::size_t e = 0; e < mixed.size(); ++e) next[p][e] += mixed[e];
      }
      h = std::move(next);
    }
    outputs.push_back(h[t]);
  }
  return outputs;
}

}  // namespace oracle
