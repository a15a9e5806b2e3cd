#pragma once

#include <string>
#include <vector>

#include "sgglc/tensor.hpp"

namespace sgglc {

// "SGT1" binary tensor file: magic bytes, u32 rank, rank x u32 dims,
// little-endian f32 payload, row-major. Used for priors, checkpoints and
// golden test files.

void write_sgt(const std::string& path, const std::vector<i64>& dims,
               const float* data, i64 count);
void read_sgt(const std::string& path, std::vector<i64>& dims,
              std::vector<float>& data);

template <typename T>
void save_sgt(const std::string& path, const Tensor<T>& t) {
  const Shape& s = t.shape();
  std::vector<float> buf(static_cast<size_t>(t.count()));
  for (i64 i = 0; i < t.count(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  write_sgt(path, {s.n, s.c, s.h, s.w}, buf.data(), t.count());
}

// Ranks 1..4 are accepted and right-aligned into NCHW: a rank-1 file of
// length c loads as (1, c, 1, 1), rank-2 (h, w) as (1, 1, h, w).
template <typename T>
Tensor<T> load_sgt(const std::string& path) {
  std::vector<i64> dims;
  std::vector<float> data;
  read_sgt(path, dims, data);
  Shape s(1, 1, 1, 1);
  switch (dims.size()) {
    case 1: s = Shape(1, dims[0], 1, 1); break;
    case 2: s = Shape(1, 1, dims[0], dims[1]); break;
    case 3: s = Shape(1, dims[0], dims[1], dims[2]); break;
    case 4: s = Shape(dims[0], dims[1], dims[2], dims[3]); break;
    default:
      throw FormatError("SGT1 rank " + std::to_string(dims.size()) + " not supported: " + path);
  }
  Tensor<T> out(s);
  for (i64 i = 0; i < out.count(); ++i) out[i] = static_cast<T>(data[static_cast<size_t>(i)]);
  return out;
}

}  // namespace sgglc
