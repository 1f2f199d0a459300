#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctzip/image.hpp"

namespace ctzip {

// Generator parameters for synthetic porous slices. The default target
// porosity matches the sandstone reference value used throughout the
// evaluation fixtures.
struct PorousSpec {
  int width = 64;
  int height = 64;
  double target_porosity = 19.16;  // percent, in (0, 100)
  int correlation_length = 8;      // pixels, >= 1
  double noise_sigma = 0.0;        // used when rendering a noisy grayscale variant
  uint64_t seed = 7;
};

// Seeded Gaussian field, box-smoothed over a centered window of half-width
// correlation_length/2 (clamped at borders), thresholded at the empirical
// quantile so that exactly round(n * target / 100) pixels become pores.
BinaryImage gen_porous_binary(const PorousSpec& spec);

// Two-phase grayscale render with additive seeded Gaussian noise, clamped
// to [0, 255] and rounded. Pores are conventionally the darker phase.
GrayImage gen_noisy_gray(const BinaryImage& binary, uint8_t solid_level, uint8_t pore_level,
                         double noise_sigma, uint64_t seed);

// A: centered solid square (value 1.0 on 0.0); B: the same square shifted
// horizontally by `shift` pixels. Both placements must stay in bounds.
std::pair<FloatImage, FloatImage> gen_shifted_square(int field_size, int square_side, int shift);

// Writes `count` numbered PGM files plus manifest.txt (seed and spec) into
// an existing or creatable directory. Image i uses seed + 2i (field) and
// seed + 2i + 1 (noise). Renders solid 180 / pore 60 (pores dark);
// noise_sigma = 0 gives exact two-level images.
std::vector<std::string> write_porous_dataset(const std::string& dir, int count,
                                              const PorousSpec& spec);

}  // namespace ctzip
