#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctzip/error.hpp"

namespace ctzip {

// 8-bit grayscale raster, row-major, top-left origin.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, uint8_t fill = 0);

  uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  size_t pixel_count() const { return data.size(); }
};

// 64-bit real raster in [0, 1], row-major. Produced by normalize().
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  FloatImage() = default;
  FloatImage(int w, int h, double fill = 0.0);

  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  size_t pixel_count() const { return data.size(); }
};

// Two-phase raster: 0 = solid material, 1 = pore.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // each element 0 or 1

  BinaryImage() = default;
  BinaryImage(int w, int h, uint8_t fill = 0);

  uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  size_t pixel_count() const { return data.size(); }
};

struct CropRect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

// ---- file I/O ----------------------------------------------------------

// Reads a binary PGM (magic "P5", maxval 255). Comments and arbitrary
// whitespace in the header are accepted; no rescaling is applied.
GrayImage load_pgm(const std::string& path);

// Writes "P5\n<w> <h>\n255\n" followed by the raw row-major bytes.
void save_pgm(const GrayImage& img, const std::string& path);

// Binary images are serialized as PGM with values {0, 255}; pores render
// white. Use binarize(gray, 127, /*pore_is_dark=*/false) to read one back.
GrayImage binary_to_gray(const BinaryImage& img);
void save_binary_pgm(const BinaryImage& img, const std::string& path);

// ---- preprocessing -----------------------------------------------------

// Output pixel (i, j) = input pixel (x0 + i, y0 + j).
GrayImage crop(const GrayImage& img, const CropRect& rect);

// value = intensity / 255.
FloatImage normalize(const GrayImage& img);

// intensity = round(value * 255), half away from zero; values outside
// [0, 1] are clamped first.
GrayImage denormalize(const FloatImage& img);

// ---- thresholding and structure analysis -------------------------------

// Threshold t in [0, 255] maximizing the between-class variance
// w0*w1*(mu0-mu1)^2 over the 256-bin histogram, class 0 = intensities <= t.
// Ties broken by smallest t. Constant images have no two classes to
// separate and raise DegenerateError.
uint8_t otsu_threshold(const GrayImage& img);

// Default polarity marks the darker phase as pore: bit 1 <=> intensity <=
// threshold. Pass pore_is_dark=false for images where pores are bright
// (e.g. reloaded binary renders or decoded reconstructions).
BinaryImage binarize(const GrayImage& img, uint8_t threshold, bool pore_is_dark = true);

// Percentage of pore pixels: 100 * count / (width * height).
double porosity(const BinaryImage& img);

// Per-pixel mode seeking in joint (x, y, intensity) space with a flat
// kernel: each pixel's (position, value) estimate moves to the mean over
// neighbors within the Chebyshev spatial_radius of the current position
// whose intensity is within range_radius of the current value, until the
// intensity shift drops below 0.5 or max_iter is reached.
GrayImage mean_shift_filter(const GrayImage& img, int spatial_radius = 2,
                            int range_radius = 20, int max_iter = 10);

}  // namespace ctzip
