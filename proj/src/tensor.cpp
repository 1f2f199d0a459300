#include "ctzip/tensor.hpp"

namespace ctzip {

Tensor::Tensor(int n_, int h_, int w_, int c_) : n(n_), h(h_), w(w_), c(c_) {
  if (n < 1 || h < 1 || w < 1 || c < 1) {
    throw ShapeError("tensor dimensions must be >= 1, got " + shape_str());
  }
  data.assign(static_cast<size_t>(n) * h * w * c, 0.0);
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
         std::to_string(c) + ")";
}

Parameter::Parameter(Tensor init)
    : value(std::move(init)),
      grad(value.n, value.h, value.w, value.c),
      m(value.n, value.h, value.w, value.c),
      v(value.n, value.h, value.w, value.c) {}

void Parameter::zero_grad() {
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

Codebook::Codebook(int K_, int D_) : K(K_), D(D_) {
  if (K < 2) throw ConfigError("codebook needs K >= 2, got " + std::to_string(K));
  if (D < 1) throw ConfigError("codebook needs D >= 1, got " + std::to_string(D));
  vectors.assign(static_cast<size_t>(K) * D, 0.0);
}

}  // namespace ctzip
