// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "treekv/error.hpp"
#include "treekv/rng.hpp"

namespace treekv {

struct ModelDims {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t vocab = 0;  // 0 disables the embedding and logit head

  bool operator==(const ModelDims&) const = default;
};

/// Dense row-major float matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t r) const noexcept {
    return std::span<const float>(data_).subspan(r * cols_, cols_);
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Projections of one attention head.
struct HeadWeights {
  Matrix query;  // d_model x d_head
  Matrix key;    // d_model x d_head
  Matrix value;  // d_model x d_head

  bool operator==(const HeadWeights&) const = default;
};

struct LayerWeights {
  std::vector<HeadWeights> heads;
  Matrix output;  // (heads * d_head) x d_model, mixes head outputs back into the residual

  bool operator==(const LayerWeights&) const = default;
};

/// Weights of the toy attention-only model.
///
/// Generation and file order are identical: for each layer, for each head
/// W_Q, W_K, W_V; then the layer's W_O. When vocab > 0 the embedding table
/// (vocab x d_model) and the unembedding (d_model x vocab) follow. Every
/// entry is float(z * scale) where z is the next NormalStream(seed) variate
/// and scale is 1/sqrt(rows) for projections (so 1/sqrt(d_model) for
/// W_Q/W_K/W_V) and 1 for the embedding table.
struct ModelWeights {
  ModelDims dims;
  std::uint64_t seed = 0;
  std::vector<LayerWeights> layers;
  Matrix embedding;    // vocab x d_model, empty when vocab == 0
  Matrix unembedding;  // d_model x vocab, empty when vocab == 0

  bool operator==(const ModelWeights&) const = default;
};

namespace detail {

inline std::size_t checked_mul(std::size_t a, std::size_t b, const char* what) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    throw DimensionError(std::string("dimension overflow computing ") + what);
  }
  return a * b;
}

inline std::size_t checked_add(std::size_t a, std::size_t b, const char* what) {
  if (b > std::numeric_limits<std::size_t>::max() - a) {
    throw DimensionError(std::string("dimension overflow computing ") + what);
  }
  return a + b;
}

}  // namespace detail

/// Total float count of a model; throws DimensionError on zero or
/// overflowing dimensions. Every dimension must also fit the u32 file field.
inline std::size_t parameter_count(const ModelDims& dims) {
  const std::array<std::pair<std::size_t, const char*>, 4> required{{
      {dims.layers, "layers"},
      {dims.heads, "heads"},
      {dims.d_model, "d_model"},
      {dims.d_head, "d_head"},
  }};
  for (const auto& [value, name] : required) {
    if (value == 0) throw DimensionError(std::string(name) + " must be >= 1");
    if (value > std::numeric_limits<std::uint32_t>::max()) {
      throw DimensionError(std::string(name) + " exceeds u32 range");
    }
  }
  if (dims.vocab > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("vocab exceeds u32 range");
  }
  using detail::checked_add;
  using detail::checked_mul;
  const std::size_t proj = checked_mul(dims.d_model, dims.d_head, "projection");
  const std::size_t per_head = checked_mul(proj, 3, "head");
  const std::size_t concat = checked_mul(dims.heads, dims.d_head, "head concat");
  const std::size_t out = checked_mul(concat, dims.d_model, "output projection");
  const std::size_t per_layer =
      checked_add(checked_mul(per_head, dims.heads, "layer"), out, "layer");
  std::size_t total = checked_mul(per_layer, dims.layers, "model");
  const std::size_t table = checked_mul(dims.vocab, dims.d_model, "embedding");
  total = checked_add(total, checked_mul(table, 2, "embedding"), "model");
  // Keep the byte size addressable as well.
  checked_mul(total, sizeof(float), "model bytes");
  return total;
}

namespace detail {

inline Matrix draw_matrix(NormalStream& normals, std::size_t rows, std::size_t cols,
                          double scale) {
  Matrix m(rows, cols);
  for (float& entry : m.data()) {
    entry = static_cast<float>(normals.next() * scale);
  }
  return m;
}

}  // namespace detail

/// Deterministic weights: identical (seed, dims) give bit-identical results.
inline ModelWeights generate_weights(std::uint64_t seed, const ModelDims& dims) {
  parameter_count(dims);
  NormalStream normals(seed);
  ModelWeights w;
  w.dims = dims;
  w.seed = seed;
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(dims.d_model));
  const std::size_t concat = dims.heads * dims.d_head;
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(concat));
  w.layers.resize(dims.layers);
  for (auto& layer : w.layers) {
    layer.heads.resize(dims.heads);
    for (auto& head : layer.heads) {
      head.query = detail::draw_matrix(normals, dims.d_model, dims.d_head, proj_scale);
      head.key = detail::draw_matrix(normals, dims.d_model, dims.d_head, proj_scale);
      head.value = detail::draw_matrix(normals, dims.d_model, dims.d_head, proj_scale);
    }
    layer.output = detail::draw_matrix(normals, concat, dims.d_model, out_scale);
  }
  if (dims.vocab > 0) {
    w.embedding = detail::draw_matrix(normals, dims.vocab, dims.d_model, 1.0);
    w.unembedding = detail::draw_matrix(normals, dims.d_model, dims.vocab, proj_scale);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Weight file: "TKVW", u16 version, u32 layers, heads, d_model, d_head, vocab,
// u64 seed, then every matrix row-major as f32, all little-endian, in the
// generation order documented on ModelWeights.

inline constexpr std::array<char, 4> kWeightMagic{'T', 'K', 'V', 'W'};
inline constexpr std::uint16_t kWeightVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>(bits & 0xFF));
    bits = static_cast<U>(bits >> 8);
  }
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::make_unsigned_t<T>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      throw InputError("weight file truncated");
    }
    bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(c)) << (8 * i));
  }
  return static_cast<T>(bits);
}

inline void put_matrix(std::ostream& out, const Matrix& m) {
  for (float f : m.data()) put_le(out, std::bit_cast<std::uint32_t>(f));
}

inline Matrix get_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (float& f : m.data()) {
    f = std::bit_cast<float>(get_le<std::uint32_t>(in));
    if (!std::isfinite(f)) throw InputError("weight file contains non-finite entry");
  }
  return m;
}

}  // namespace detail

inline void write_weights(std::ostream& out, const ModelWeights& w) {
  out.write(kWeightMagic.data(), kWeightMagic.size());
  detail::put_le<std::uint16_t>(out, kWeightVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.dims.layers));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.dims.heads));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.dims.d_model));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.dims.d_head));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.dims.vocab));
  detail::put_le<std::uint64_t>(out, w.seed);
  for (const auto& layer : w.layers) {
    for (const auto& head : layer.heads) {
      detail::put_matrix(out, head.query);
      detail::put_matrix(out, head.key);
      detail::put_matrix(out, head.value);
    }
    detail::put_matrix(out, layer.output);
  }
  if (w.dims.vocab > 0) {
    detail::put_matrix(out, w.embedding);
    detail::put_matrix(out, w.unembedding);
  }
  if (!out) throw InputError("failed writing weight file");
}

inline ModelWeights read_weights(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kWeightMagic) throw InputError("bad weight file magic");
  const auto version = detail::get_le<std::uint16_t>(in);
  if (version != kWeightVersion) {
    throw InputError("unsupported weight file version " + std::to_string(version));
  }
  ModelWeights w;
  w.dims.layers = detail::get_le<std::uint32_t>(in);
  w.dims.heads = detail::get_le<std::uint32_t>(in);
  w.dims.d_model = detail::get_le<std::uint32_t>(in);
  w.dims.d_head = detail::get_le<std::uint32_t>(in);
  w.dims.vocab = detail::get_le<std::uint32_t>(in);
  w.seed = detail::get_le<std::uint64_t>(in);
  parameter_count(w.dims);
  const auto& d = w.dims;
  w.layers.resize(d.layers);
  for (auto& layer : w.layers) {
    layer.heads.resize(d.heads);
    for (auto& head : layer.heads) {
      head.query = detail::get_matrix(in, d.d_model, d.d_head);
      head.key = detail::get_matrix(in, d.d_model, d.d_head);
      head.value = detail::get_matrix(in, d.d_model, d.d_head);
    }
    layer.output = detail::get_matrix(in, d.heads * d.d_head, d.d_model);
  }
  if (d.vocab > 0) {
    w.embedding = detail::get_matrix(in, d.vocab, d.d_model);
    w.unembedding = detail::get_matrix(in, d.d_model, d.vocab);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InputError("trailing bytes after weight matrices");
  }
  return w;
}

}  // namespace treekv
