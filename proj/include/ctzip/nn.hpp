#pragma once

#include <functional>
#include <vector>

#include "ctzip/rng.hpp"
#include "ctzip/tensor.hpp"

namespace ctzip {

// Reverse-mode building blocks for the two autoencoder architectures.
// Every op is a pure function; backward variants take the saved forward
// inputs explicitly and accumulate into parameter gradients. All weights
// use layout (3, 3, Cin, Cout); biases are (1, 1, 1, Cout).

// ---- convolution ---------------------------------------------------------

// Same-padded 3x3 convolution, stride 1 or 2 (zero padding of one pixel on
// every side; the window for output site (oy, ox) is centered on input
// (oy*stride, ox*stride)). H and W must be divisible by the stride.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride);

// Accumulates weight/bias gradients and returns the input gradient.
Tensor conv2d_backward(const Tensor& input, const Tensor& weights, int stride,
                       const Tensor& grad_out, Tensor& grad_weights, Tensor& grad_bias);

// Stride-2 transposed convolution, the exact adjoint of the stride-2
// conv2d scatter pattern: output is 2H x 2W and
// out(2*iy+ky-1, 2*ix+kx-1, co) += in(iy, ix, ci) * W(ky, kx, ci, co).
Tensor transposed_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor transposed_conv2d_backward(const Tensor& input, const Tensor& weights,
                                  const Tensor& grad_out, Tensor& grad_weights,
                                  Tensor& grad_bias);

// ---- resolution changes --------------------------------------------------

// 2x2 max pooling; H and W must be even. argmax (flat input index per
// output element, first-in-row-major ties) is recorded for the backward
// pass when a non-null pointer is given.
Tensor maxpool2x2(const Tensor& input, std::vector<int32_t>* argmax = nullptr);
Tensor maxpool2x2_backward(const Tensor& grad_out, const Tensor& input,
                           const std::vector<int32_t>& argmax);

// Nearest-neighbor 2x upsampling; backward sums the four gradients that
// each source pixel fanned out to.
Tensor upsample_nearest2x(const Tensor& input);
Tensor upsample_nearest2x_backward(const Tensor& grad_out);

// ---- activations ---------------------------------------------------------

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);  // subgradient at 0 is 0

Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

// ---- losses ---------------------------------------------------------------

// Mean over all elements of -[t*ln p + (1-t)*ln(1-p)], with p clamped to
// [1e-7, 1-1e-7]. The gradient is zero where the clamp is active.
double bce_loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

// Mean squared elementwise difference; gradient 2(p-t)/count.
double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

// ---- vector quantization ---------------------------------------------------

// Nearest codebook row per spatial site (squared Euclidean, smallest-k
// ties). quantized rows are copied bit-identically from the codebook.
// codebook_loss = mean over all elements of (e - sg[z_e])^2;
// commitment_loss = beta * mean of (z_e - sg[e])^2.
VQResult vector_quantize(const Tensor& z_e, const Codebook& codebook, double beta);

// Straight-through backward: the reconstruction gradient at the quantized
// output passes to z_e unchanged; the commitment term adds
// beta * 2 * (z_e - q) / count. Codebook rows receive only the
// codebook-loss gradient 2 * (e_k - z_e) / count at their assigned sites,
// accumulated into codebook_grad (flat K x D).
Tensor vq_backward(const Tensor& grad_quantized, const Tensor& z_e, const VQResult& result,
                   const Codebook& codebook, double beta, std::vector<double>& codebook_grad);

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Standard bias-corrected Adam; increments step_count and zeroes gradients
// after applying the update.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg = {});

// ---- initialization --------------------------------------------------------

// Glorot-uniform 3x3 kernel, fan_in = 9*cin, fan_out = 9*cout.
Tensor glorot_conv_init(int cin, int cout, Rng& rng);

// Uniform in [-1/K, 1/K].
Codebook codebook_init(int K, int D, Rng& rng);

// ---- verification harness ---------------------------------------------------

// Central-difference check of an analytic gradient: perturbs each
// coordinate of x by +/-epsilon, compares (f(x+) - f(x-)) / (2 epsilon)
// against analytic[i], and returns the max relative error with
// denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& x, const std::vector<double>& analytic,
                         double epsilon);

}  // namespace ctzip
