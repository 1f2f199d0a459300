#pragma once

#include <string>
#include <vector>

#include "ctzip/image.hpp"

namespace ctzip {

// Laplacian response of an image: same dimensions, unbounded sign.
struct LaplacianImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  LaplacianImage() = default;
  LaplacianImage(int w, int h);

  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
};

// PSNR in decibels, or the distinguished infinite signal for mse = 0.
// Serialized as the string "inf", never a floating infinity.
struct Psnr {
  double db = 0.0;
  bool infinite = false;

  std::string str() const;
};

struct MetricsReport {
  std::string image_id_a;
  std::string image_id_b;
  double max_intensity = 1.0;  // convention: 1 for normalized/binary, 255 for 8-bit
  double mse = 0.0;            // in squared max_intensity units
  Psnr psnr_db;
  double msle = 0.0;  // in squared max_intensity units
};

// Mean squared error over normalized [0,1] images: (1/(m*n)) * sum (a-b)^2.
// The 8-bit convention is a pure rescale: mse_255 = 255^2 * mse_norm.
double mse(const FloatImage& a, const FloatImage& b);

// 20*log10(max_intensity) - 10*log10(mse). mse = 0 returns the infinite
// signal; negative mse or non-positive max_intensity is a data error.
Psnr psnr(double mse_value, double max_intensity);

// Discrete 5-point stencil with replicate (clamp-to-edge) padding:
// L(i,j) = A(i-1,j) + A(i+1,j) + A(i,j-1) + A(i,j+1) - 4*A(i,j).
LaplacianImage laplacian(const FloatImage& img);

// Mean square Laplacian error: (1/(m*n)) * sum [lap(a-b)]^2.
double msle(const FloatImage& a, const FloatImage& b);

// lap(a) - lap(b) per pixel; equals lap(a-b) by linearity.
LaplacianImage laplacian_diff_map(const FloatImage& a, const FloatImage& b);

// Aggregates mse/psnr/msle in the units of the given convention
// (max_intensity 1 or 255).
MetricsReport evaluate_pair(const FloatImage& a, const FloatImage& b, double max_intensity,
                            const std::string& id_a = "a", const std::string& id_b = "b");

// CSV with header image_id_a,image_id_b,max,mse,psnr_db,msle.
void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::string& path);
std::string metrics_csv_string(const std::vector<MetricsReport>& reports);

// Affine rescale of [min,max] to [0,255] written as PGM; the scale is
// recorded in "<path>.scale.txt" so values can be recovered.
void save_laplacian_pgm(const LaplacianImage& map, const std::string& path);

}  // namespace ctzip
