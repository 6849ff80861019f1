// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "treekv/attention.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace {

using treekv::KVCache;
using treekv::Matrix;
using treekv::Vector;

Matrix FromRows(std::initializer_list<std::initializer_list<float>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (float v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

treekv::HeadWeights Head(const Matrix& q) { return {q, q, q}; }

TEST(ProjectTest, ZeroInputGivesZeroVectors) {
  const auto w = treekv::generate_weights(1, {1, 1, 6, 3, 0});
  const auto p = treekv::project(Vector(6, 0.0), w.layers[0].heads[0]);
  EXPECT_EQ(p.q, Vector(3, 0.0));
  EXPECT_EQ(p.k, Vector(3, 0.0));
  EXPECT_EQ(p.v, Vector(3, 0.0));
}

TEST(ProjectTest, IdentityProjection) {
  const auto p = treekv::project(Vector{0.25, -3.0}, Head(FromRows({{1, 0}, {0, 1}})));
  EXPECT_EQ(p.q, (Vector{0.25, -3.0}));
}

TEST(ProjectTest, HandMultiply) {
  const auto p = treekv::project(Vector{1, 1}, Head(FromRows({{0.5f, 0.25f}, {0.5f, 0.75f}})));
  EXPECT_DOUBLE_EQ(p.q[0], 1.0);
  EXPECT_DOUBLE_EQ(p.q[1], 1.0);
}

TEST(ProjectTest, LengthMismatchThrows) {
  EXPECT_THROW(treekv::project(Vector{1, 2, 3}, Head(FromRows({{1, 0}, {0, 1}}))),
               treekv::DimensionError);
}

TEST(AttendTest, SingleSlot) {
  KVCache cache(2);
  cache.append({0.3, -1.0}, {4.0, 5.0}, 0);
  const auto r = treekv::attend(Vector{1.0, 2.0}, cache);
  EXPECT_EQ(r.weights, Vector{1.0});
  EXPECT_EQ(r.output, (Vector{4.0, 5.0}));
}

TEST(AttendTest, IdenticalKeysSplitEvenly) {
  KVCache cache(2);
  cache.append({1.0, 2.0}, {1.0, 0.0}, 0);
  cache.append({1.0, 2.0}, {0.0, 1.0}, 1);
  const auto r = treekv::attend(Vector{0.7, -0.2}, cache);
  EXPECT_DOUBLE_EQ(r.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(r.weights[1], 0.5);
}

TEST(AttendTest, ScaledSoftmaxByHand) {
  KVCache cache(2);
  cache.append({1.0, 0.0}, {0.0, 0.0}, 0);
  cache.append({0.0, 1.0}, {0.0, 0.0}, 1);
  const auto r = treekv::attend(Vector{1.0, 0.0}, cache);
  // logits [1/sqrt2, 0] -> e^{0.7071}/(e^{0.7071}+1)
  EXPECT_NEAR(r.weights[0], 0.6698, 1e-4);
  EXPECT_NEAR(r.weights[1], 0.3302, 1e-4);
  EXPECT_NEAR(r.weights[0], 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0))), 1e-15);
}

TEST(AttendTest, EmptyCacheThrows) {
  KVCache cache(2);
  EXPECT_THROW(treekv::attend(Vector{1.0, 0.0}, cache), treekv::StateError);
  EXPECT_THROW(treekv::attend_positional(Vector{1.0, 0.0}, cache), treekv::StateError);
}

TEST(AttendPropertyTest, RowsAreDistributions) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    KVCache cache(8);
    const std::size_t n = 1 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      cache.append(treekv_test::random_signal(rng, 8), treekv_test::random_signal(rng, 8), i);
    }
    auto q = treekv_test::random_signal(rng, 8);
    for (double& v : q) v *= 10.0;  // sharp softmax
    const auto r = treekv::attend_positional(q, cache);
    double total = 0.0;
    for (double w : r.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(KVCacheTest, AppendKeepsOrder) {
  KVCache cache(1);
  cache.append({0}, {0}, 0);
  EXPECT_EQ(cache.size(), 1u);
  cache.append({0}, {0}, 1);
  cache.append({0}, {0}, 2);
  EXPECT_EQ(std::vector<std::size_t>(cache.positions().begin(), cache.positions().end()),
            (std::vector<std::size_t>{0, 1, 2}));
}

TEST(KVCacheTest, AppendAfterEviction) {
  KVCache cache(1);
  for (std::size_t p : {0u, 1u, 2u, 3u}) cache.append({double(p)}, {0}, p);
  cache.erase(2);
  cache.append({4}, {0}, 4);
  EXPECT_EQ(std::vector<std::size_t>(cache.positions().begin(), cache.positions().end()),
            (std::vector<std::size_t>{0, 1, 3, 4}));
  EXPECT_EQ(cache.keys()[2], Vector{3});
}

TEST(KVCacheTest, NonMonotoneAppendThrows) {
  KVCache cache(1);
  cache.append({0}, {0}, 5);
  EXPECT_THROW(cache.append({0}, {0}, 5), treekv::OrderingError);
  EXPECT_THROW(cache.append({0}, {0}, 2), treekv::OrderingError);
  EXPECT_THROW(cache.append({0, 1}, {0}, 9), treekv::DimensionError);
}

TEST(PositionEncodingTest, WorkedReassignmentExample) {
  KVCache cache(4);
  for (std::size_t p : {0u, 1u, 2u, 3u, 7u, 8u, 9u}) cache.append(Vector(4, 1.0), Vector(4, 0.0), p);
  const auto enc = treekv::apply_positions(cache, Vector(4, 1.0), cache.size());
  EXPECT_EQ(enc.key_positions, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(enc.query_position, 7u);
  EXPECT_EQ(enc.keys[4], treekv::rotate(Vector(4, 1.0), 4));
}

TEST(PositionEncodingTest, UnevictedCacheUsesOriginalPositions) {
  KVCache cache(2);
  for (std::size_t p = 0; p < 5; ++p) cache.append({1.0, 0.0}, {0, 0}, p);
  const auto enc = treekv::apply_positions(cache, Vector{1.0, 0.0}, 4);
  EXPECT_EQ(enc.key_positions,
            std::vector<std::size_t>(cache.positions().begin(), cache.positions().end()));
}

TEST(PositionEncodingTest, ZeroPhaseIsIdentityAndStoredKeysUntouched) {
  const Vector k{0.5, -2.0, 3.0};
  EXPECT_EQ(treekv::rotate(k, 0), k);
  KVCache cache(3);
  cache.append(k, k, 0);
  cache.append(k, k, 1);
  treekv::apply_positions(cache, k, 2);
  EXPECT_EQ(cache.keys()[1], k);
}

// Rotations preserve norms and make q·k depend only on the slot offset.
TEST(PositionEncodingPropertyTest, RelativeInvariance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto q = treekv_test::random_signal(rng, 6);
    const auto k = treekv_test::random_signal(rng, 6);
    const std::size_t a = rng() % 100;
    const std::size_t shift = rng() % 100;
    auto dot = [](const Vector& x, const Vector& y) {
      return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    };
    EXPECT_NEAR(dot(treekv::rotate(q, a + 3), treekv::rotate(k, a)),
                dot(treekv::rotate(q, a + shift + 3), treekv::rotate(k, a + shift)), 1e-9);
    const auto rq = treekv::rotate(q, a);
    EXPECT_NEAR(dot(rq, rq), dot(q, q), 1e-9);
  }
}

}  // namespace
