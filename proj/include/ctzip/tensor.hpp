#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctzip/error.hpp"

namespace ctzip {

// Dense 4-D array, 64-bit reals, row-major N -> H -> W -> C.
struct Tensor {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_);

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
  size_t index(int in, int iy, int ix, int ic) const {
    return ((static_cast<size_t>(in) * h + iy) * w + ix) * c + ic;
  }
  double at(int in, int iy, int ix, int ic) const { return data[index(in, iy, ix, ic)]; }
  double& at(int in, int iy, int ix, int ic) { return data[index(in, iy, ix, ic)]; }
  std::string shape_str() const;
};

// Trainable tensor with its gradient and Adam moment buffers.
struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  int64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor init);

  void zero_grad();
};

// K embedding vectors of dimension D.
struct Codebook {
  int K = 0;
  int D = 0;
  std::vector<double> vectors;  // row-major K x D

  Codebook() = default;
  Codebook(int K_, int D_);

  double at(int k, int d) const { return vectors[static_cast<size_t>(k) * D + d]; }
  double& at(int k, int d) { return vectors[static_cast<size_t>(k) * D + d]; }
};

struct VQResult {
  Tensor quantized;              // same shape as the encoder output
  std::vector<int32_t> indices;  // N*H*W entries in [0, K)
  double codebook_loss = 0.0;
  double commitment_loss = 0.0;
};

}  // namespace ctzip
