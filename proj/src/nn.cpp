#include "ctzip/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctzip {

namespace {

constexpr double kBceEps = 1e-7;

void check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     int stride, const char* op) {
  if (weights.n != 3 || weights.h != 3) {
    throw ShapeError(std::string(op) + ": weights must be 3x3 kernels, got " +
                     weights.shape_str());
  }
  if (input.c != weights.w) {
    throw ShapeError(std::string(op) + ": input channels " + std::to_string(input.c) +
                     " != kernel Cin " + std::to_string(weights.w));
  }
  if (bias.size() != static_cast<size_t>(weights.c)) {
    throw ShapeError(std::string(op) + ": bias size mismatch");
  }
  if (stride != 1 && stride != 2) {
    throw ShapeError(std::string(op) + ": stride must be 1 or 2");
  }
  if (input.h % stride != 0 || input.w % stride != 0) {
    throw ShapeError(std::string(op) + ": spatial dims " + input.shape_str() +
                     " not divisible by stride " + std::to_string(stride));
  }
}

// Per-tap transpose of a (3,3,Ci,Co) weight tensor into (3,3,Co,Ci), so
// that backward input-gradient loops can run in channel-contiguous axpy
// form instead of strided dot products.
Tensor transpose_taps(const Tensor& weights) {
  Tensor out(3, 3, weights.c, weights.w);
  const int ci = weights.w, co = weights.c;
  for (int t = 0; t < 9; ++t) {
    const double* src = weights.data.data() + static_cast<size_t>(t) * ci * co;
    double* dst = out.data.data() + static_cast<size_t>(t) * ci * co;
    for (int i = 0; i < ci; ++i) {
      for (int o = 0; o < co; ++o) dst[static_cast<size_t>(o) * ci + i] = src[static_cast<size_t>(i) * co + o];
    }
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride) {
  check_conv_args(input, weights, bias, stride, "conv2d");
  const int ci = input.c, co = weights.c;
  const int oh = input.h / stride, ow = input.w / stride;
  Tensor out(input.n, oh, ow, co);
  std::vector<double> acc(co);
  const double* bp = bias.data.data();
  for (int in = 0; in < input.n; ++in) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::copy(bp, bp + co, acc.data());
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= input.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= input.w) continue;
            const double* ip = input.data.data() + input.index(in, iy, ix, 0);
            const double* wp =
                weights.data.data() + static_cast<size_t>(ky * 3 + kx) * ci * co;
            for (int i = 0; i < ci; ++i) {
              const double v = ip[i];
              const double* wrow = wp + static_cast<size_t>(i) * co;
              for (int o = 0; o < co; ++o) acc[o] += v * wrow[o];
            }
          }
        }
        std::copy(acc.data(), acc.data() + co, out.data.data() + out.index(in, oy, ox, 0));
      }
    }
  }
  return out;
}

Tensor conv2d_backward(const Tensor& input, const Tensor& weights, int stride,
                       const Tensor& grad_out, Tensor& grad_weights, Tensor& grad_bias) {
  const int ci = input.c, co = weights.c;
  const int oh = input.h / stride, ow = input.w / stride;
  if (grad_out.n != input.n || grad_out.h != oh || grad_out.w != ow || grad_out.c != co) {
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_str());
  }
  const Tensor wt = transpose_taps(weights);
  Tensor grad_in(input.n, input.h, input.w, input.c);
  double* gb = grad_bias.data.data();
  for (int in = 0; in < input.n; ++in) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* gp = grad_out.data.data() + grad_out.index(in, oy, ox, 0);
        for (int o = 0; o < co; ++o) gb[o] += gp[o];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= input.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= input.w) continue;
            const size_t tap = static_cast<size_t>(ky * 3 + kx) * ci * co;
            // weight gradient: outer product of the input row and grad row
            const double* ip = input.data.data() + input.index(in, iy, ix, 0);
            double* gw = grad_weights.data.data() + tap;
            for (int i = 0; i < ci; ++i) {
              const double v = ip[i];
              double* grow = gw + static_cast<size_t>(i) * co;
              for (int o = 0; o < co; ++o) grow[o] += v * gp[o];
            }
            // input gradient: scatter through transposed taps
            const double* wtp = wt.data.data() + tap;
            double* gi = grad_in.data.data() + grad_in.index(in, iy, ix, 0);
            for (int o = 0; o < co; ++o) {
              const double v = gp[o];
              const double* wrow = wtp + static_cast<size_t>(o) * ci;
              for (int i = 0; i < ci; ++i) gi[i] += v * wrow[i];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  check_conv_args(input, weights, bias, 1, "transposed_conv2d");
  const int ci = input.c, co = weights.c;
  const int oh = input.h * 2, ow = input.w * 2;
  Tensor out(input.n, oh, ow, co);
  // broadcast bias, then scatter the kernel taps
  for (int in = 0; in < input.n; ++in) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::copy(bias.data.begin(), bias.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(out.index(in, y, x, 0)));
      }
    }
  }
  for (int in = 0; in < input.n; ++in) {
    for (int iy = 0; iy < input.h; ++iy) {
      for (int ix = 0; ix < input.w; ++ix) {
        const double* ip = input.data.data() + input.index(in, iy, ix, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const int y = 2 * iy + ky - 1;
          if (y < 0 || y >= oh) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int x = 2 * ix + kx - 1;
            if (x < 0 || x >= ow) continue;
            const double* wp =
                weights.data.data() + static_cast<size_t>(ky * 3 + kx) * ci * co;
            double* op = out.data.data() + out.index(in, y, x, 0);
            for (int i = 0; i < ci; ++i) {
              const double v = ip[i];
              const double* wrow = wp + static_cast<size_t>(i) * co;
              for (int o = 0; o < co; ++o) op[o] += v * wrow[o];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor transposed_conv2d_backward(const Tensor& input, const Tensor& weights,
                                  const Tensor& grad_out, Tensor& grad_weights,
                                  Tensor& grad_bias) {
  const int ci = input.c, co = weights.c;
  const int oh = input.h * 2, ow = input.w * 2;
  if (grad_out.n != input.n || grad_out.h != oh || grad_out.w != ow || grad_out.c != co) {
    throw ShapeError("transposed_conv2d_backward: grad_out shape " + grad_out.shape_str());
  }
  const Tensor wt = transpose_taps(weights);
  Tensor grad_in(input.n, input.h, input.w, input.c);
  double* gb = grad_bias.data.data();
  for (const double* gp = grad_out.data.data();
       gp != grad_out.data.data() + grad_out.size(); gp += co) {
    for (int o = 0; o < co; ++o) gb[o] += gp[o];
  }
  for (int in = 0; in < input.n; ++in) {
    for (int iy = 0; iy < input.h; ++iy) {
      for (int ix = 0; ix < input.w; ++ix) {
        const double* ip = input.data.data() + input.index(in, iy, ix, 0);
        double* gi = grad_in.data.data() + grad_in.index(in, iy, ix, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const int y = 2 * iy + ky - 1;
          if (y < 0 || y >= oh) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int x = 2 * ix + kx - 1;
            if (x < 0 || x >= ow) continue;
            const size_t tap = static_cast<size_t>(ky * 3 + kx) * ci * co;
            const double* gp = grad_out.data.data() + grad_out.index(in, y, x, 0);
            double* gw = grad_weights.data.data() + tap;
            for (int i = 0; i < ci; ++i) {
              const double v = ip[i];
              double* grow = gw + static_cast<size_t>(i) * co;
              for (int o = 0; o < co; ++o) grow[o] += v * gp[o];
            }
            const double* wtp = wt.data.data() + tap;
            for (int o = 0; o < co; ++o) {
              const double v = gp[o];
              const double* wrow = wtp + static_cast<size_t>(o) * ci;
              for (int i = 0; i < ci; ++i) gi[i] += v * wrow[i];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor maxpool2x2(const Tensor& input, std::vector<int32_t>* argmax) {
  if (input.h % 2 != 0 || input.w % 2 != 0) {
    throw ShapeError("maxpool2x2: H and W must be even, got " + input.shape_str());
  }
  const int oh = input.h / 2, ow = input.w / 2;
  Tensor out(input.n, oh, ow, input.c);
  if (argmax) argmax->assign(out.size(), 0);
  for (int in = 0; in < input.n; ++in) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ic = 0; ic < input.c; ++ic) {
          double best = -std::numeric_limits<double>::infinity();
          size_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const size_t idx = input.index(in, 2 * oy + dy, 2 * ox + dx, ic);
              if (input.data[idx] > best) {
                best = input.data[idx];
                best_idx = idx;
              }
            }
          }
          const size_t oidx = out.index(in, oy, ox, ic);
          out.data[oidx] = best;
          if (argmax) (*argmax)[oidx] = static_cast<int32_t>(best_idx);
        }
      }
    }
  }
  return out;
}

Tensor maxpool2x2_backward(const Tensor& grad_out, const Tensor& input,
                           const std::vector<int32_t>& argmax) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool2x2_backward: argmax size mismatch");
  }
  Tensor grad_in(input.n, input.h, input.w, input.c);
  for (size_t i = 0; i < grad_out.size(); ++i) {
    grad_in.data[static_cast<size_t>(argmax[i])] += grad_out.data[i];
  }
  return grad_in;
}

Tensor upsample_nearest2x(const Tensor& input) {
  Tensor out(input.n, input.h * 2, input.w * 2, input.c);
  const int c = input.c;
  for (int in = 0; in < input.n; ++in) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const double* src = input.data.data() + input.index(in, y / 2, x / 2, 0);
        double* dst = out.data.data() + out.index(in, y, x, 0);
        std::copy(src, src + c, dst);
      }
    }
  }
  return out;
}

Tensor upsample_nearest2x_backward(const Tensor& grad_out) {
  if (grad_out.h % 2 != 0 || grad_out.w % 2 != 0) {
    throw ShapeError("upsample_nearest2x_backward: grad shape " + grad_out.shape_str());
  }
  Tensor grad_in(grad_out.n, grad_out.h / 2, grad_out.w / 2, grad_out.c);
  const int c = grad_out.c;
  for (int in = 0; in < grad_out.n; ++in) {
    for (int y = 0; y < grad_out.h; ++y) {
      for (int x = 0; x < grad_out.w; ++x) {
        const double* src = grad_out.data.data() + grad_out.index(in, y, x, 0);
        double* dst = grad_in.data.data() + grad_in.index(in, y / 2, x / 2, 0);
        for (int ic = 0; ic < c; ++ic) dst[ic] += src[ic];
      }
    }
  }
  return grad_in;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  if (!grad_out.same_shape(input)) throw ShapeError("relu_backward: shape mismatch");
  Tensor grad_in = grad_out;
  for (size_t i = 0; i < grad_in.size(); ++i) {
    if (input.data[i] <= 0.0) grad_in.data[i] = 0.0;
  }
  return grad_in;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
  if (!grad_out.same_shape(output)) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor grad_in = grad_out;
  for (size_t i = 0; i < grad_in.size(); ++i) {
    const double y = output.data[i];
    grad_in.data[i] *= y * (1.0 - y);
  }
  return grad_in;
}

double bce_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
  if (!pred.same_shape(target)) throw ShapeError("bce_loss: shape mismatch");
  const double count = static_cast<double>(pred.size());
  double acc = 0.0;
  if (grad) *grad = Tensor(pred.n, pred.h, pred.w, pred.c);
  for (size_t i = 0; i < pred.size(); ++i) {
    const double p = pred.data[i];
    const double t = target.data[i];
    const double q = std::clamp(p, kBceEps, 1.0 - kBceEps);
    acc -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    if (grad) {
      grad->data[i] =
          (p > kBceEps && p < 1.0 - kBceEps) ? (p - t) / (p * (1.0 - p)) / count : 0.0;
    }
  }
  return acc / count;
}

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
  if (!pred.same_shape(target)) throw ShapeError("mse_loss: shape mismatch");
  const double count = static_cast<double>(pred.size());
  double acc = 0.0;
  if (grad) *grad = Tensor(pred.n, pred.h, pred.w, pred.c);
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
    if (grad) grad->data[i] = 2.0 * d / count;
  }
  return acc / count;
}

VQResult vector_quantize(const Tensor& z_e, const Codebook& codebook, double beta) {
  if (z_e.c != codebook.D) {
    throw ShapeError("vector_quantize: channels " + std::to_string(z_e.c) + " != codebook D " +
                     std::to_string(codebook.D));
  }
  const int d = codebook.D, k = codebook.K;
  VQResult res;
  res.quantized = Tensor(z_e.n, z_e.h, z_e.w, z_e.c);
  const size_t sites = z_e.size() / d;
  res.indices.assign(sites, 0);
  double sq_acc = 0.0;
  for (size_t s = 0; s < sites; ++s) {
    const double* zp = z_e.data.data() + s * d;
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (int kk = 0; kk < k; ++kk) {
      const double* ep = codebook.vectors.data() + static_cast<size_t>(kk) * d;
      double dist = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = zp[j] - ep[j];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_k = kk;
      }
    }
    res.indices[s] = best_k;
    const double* ep = codebook.vectors.data() + static_cast<size_t>(best_k) * d;
    std::copy(ep, ep + d, res.quantized.data.data() + s * d);
    sq_acc += best;
  }
  const double mean_sq = sq_acc / static_cast<double>(z_e.size());
  res.codebook_loss = mean_sq;
  res.commitment_loss = beta * mean_sq;
  return res;
}

Tensor vq_backward(const Tensor& grad_quantized, const Tensor& z_e, const VQResult& result,
                   const Codebook& codebook, double beta, std::vector<double>& codebook_grad) {
  if (!grad_quantized.same_shape(z_e)) throw ShapeError("vq_backward: shape mismatch");
  if (codebook_grad.size() != codebook.vectors.size()) {
    throw ShapeError("vq_backward: codebook grad size mismatch");
  }
  const int d = codebook.D;
  const double count = static_cast<double>(z_e.size());
  Tensor grad_z = grad_quantized;  // straight-through copy
  const size_t sites = result.indices.size();
  for (size_t s = 0; s < sites; ++s) {
    const double* zp = z_e.data.data() + s * d;
    const double* qp = result.quantized.data.data() + s * d;
    double* gz = grad_z.data.data() + s * d;
    double* gcb = codebook_grad.data() + static_cast<size_t>(result.indices[s]) * d;
    for (int j = 0; j < d; ++j) {
      gz[j] += beta * 2.0 * (zp[j] - qp[j]) / count;
      gcb[j] += 2.0 * (qp[j] - zp[j]) / count;
    }
  }
  return grad_z;
}

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg) {
  for (Parameter* p : params) {
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data[i];
      const double m = cfg.beta1 * p->m.data[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p->v.data[i] + (1.0 - cfg.beta2) * g * g;
      p->m.data[i] = m;
      p->v.data[i] = v;
      p->value.data[i] -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
      p->grad.data[i] = 0.0;
    }
  }
}

Tensor glorot_conv_init(int cin, int cout, Rng& rng) {
  Tensor w(3, 3, cin, cout);
  const double limit = std::sqrt(6.0 / (9.0 * cin + 9.0 * cout));
  for (double& v : w.data) v = rng.next_uniform(-limit, limit);
  return w;
}

Codebook codebook_init(int K, int D, Rng& rng) {
  Codebook cb(K, D);
  const double limit = 1.0 / static_cast<double>(K);
  for (double& v : cb.vectors) v = rng.next_uniform(-limit, limit);
  return cb;
}

double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& x, const std::vector<double>& analytic,
                         double epsilon) {
  if (x.size() != analytic.size()) throw ShapeError("finite_diff_check: size mismatch");
  std::vector<double> probe = x;
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + epsilon;
    const double fp = f(probe);
    probe[i] = x[i] - epsilon;
    const double fm = f(probe);
    probe[i] = x[i];
    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace ctzip
