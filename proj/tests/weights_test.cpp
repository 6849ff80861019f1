// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "treekv/weights.hpp"

#include <bit>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

namespace {

using treekv::ModelDims;
using treekv::generate_weights;

std::string Serialize(const treekv::ModelWeights& w) {
  std::ostringstream out;
  treekv::write_weights(out, w);
  return out.str();
}

TEST(GenerateWeightsTest, SameSeedIsBitIdentical) {
  const ModelDims dims{2, 3, 8, 4, 11};
  EXPECT_EQ(Serialize(generate_weights(7, dims)), Serialize(generate_weights(7, dims)));
}

TEST(GenerateWeightsTest, DifferentSeedsDiffer) {
  const ModelDims dims{1, 1, 8, 4, 0};
  EXPECT_NE(generate_weights(7, dims), generate_weights(8, dims));
}

// Frozen from tests/oracle/weights_reference.py 42 8 4, a standalone
// re-implementation of SplitMix64 + polar normals + generation order.
TEST(GenerateWeightsTest, MatchesStandaloneReference) {
  const auto w = generate_weights(42, ModelDims{1, 1, 8, 4, 0});
  const auto& q = w.layers[0].heads[0].query;
  EXPECT_EQ(std::bit_cast<std::uint32_t>(q(0, 0)), 0x3e32779au);
  EXPECT_EQ(std::bit_cast<std::uint32_t>(q(0, 1)), 0xbe7b41c4u);
  EXPECT_EQ(std::bit_cast<std::uint32_t>(q(0, 2)), 0xbee7e657u);
  EXPECT_EQ(std::bit_cast<std::uint32_t>(q(0, 3)), 0xbea33304u);
  EXPECT_FLOAT_EQ(q(0, 0), 0.17428436875343323f);
}

TEST(GenerateWeightsTest, ZeroDimensionRejected) {
  EXPECT_THROW(generate_weights(1, ModelDims{0, 1, 8, 4, 0}), treekv::DimensionError);
  EXPECT_THROW(generate_weights(1, ModelDims{1, 1, 8, 0, 0}), treekv::DimensionError);
}

TEST(GenerateWeightsTest, OverflowingDimensionRejected) {
  const std::size_t huge = std::numeric_limits<std::uint32_t>::max();
  EXPECT_THROW(treekv::parameter_count(ModelDims{huge, huge, huge, huge, 0}),
               treekv::DimensionError);
  EXPECT_THROW(treekv::parameter_count(ModelDims{1, 1, huge + 1, 1, 0}), treekv::DimensionError);
}

TEST(WeightFileTest, HeaderLayout) {
  const std::string bytes = Serialize(generate_weights(5, ModelDims{1, 2, 3, 2, 0}));
  ASSERT_GE(bytes.size(), 34u);
  EXPECT_EQ(bytes.substr(0, 4), "TKVW");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);   // layers
  EXPECT_EQ(bytes[10], 2);  // heads
  EXPECT_EQ(bytes[14], 3);  // d_model
  EXPECT_EQ(bytes[18], 2);  // d_head
  EXPECT_EQ(bytes[22], 0);  // vocab
  EXPECT_EQ(bytes[26], 5);  // seed, u64
  // 2 heads * 3 * (3x2) + W_O (4x3) floats after the 34-byte header.
  EXPECT_EQ(bytes.size(), 34u + 4u * (2 * 3 * 6 + 12));
}

// Property: any model survives a write/read cycle unchanged.
TEST(WeightFileTest, RoundTripProperty) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelDims dims{dim(rng), dim(rng), dim(rng), dim(rng), dim(rng) - 1};
    const auto w = generate_weights(rng(), dims);
    std::istringstream in(Serialize(w));
    EXPECT_EQ(treekv::read_weights(in), w);
  }
}

TEST(WeightFileTest, CorruptFilesRejected) {
  std::string bytes = Serialize(generate_weights(5, ModelDims{1, 1, 4, 2, 3}));
  {
    std::istringstream in(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(treekv::read_weights(in), treekv::InputError);
  }
  {
    std::istringstream in(bytes + "x");
    EXPECT_THROW(treekv::read_weights(in), treekv::InputError);
  }
  bytes[0] = 'X';
  std::istringstream in(bytes);
  EXPECT_THROW(treekv::read_weights(in), treekv::InputError);
}

}  // namespace
