#include "ctzip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ctzip/rng.hpp"

namespace ctzip {

BinaryImage gen_porous_binary(const PorousSpec& spec) {
  if (spec.width < 1 || spec.height < 1) throw ConfigError("porous spec: bad dimensions");
  if (!(spec.target_porosity > 0.0 && spec.target_porosity < 100.0)) {
    throw ConfigError("porous spec: target_porosity must be in (0, 100)");
  }
  if (spec.correlation_length < 1) {
    throw ConfigError("porous spec: correlation_length must be >= 1");
  }
  const int w = spec.width, h = spec.height;
  const size_t n = static_cast<size_t>(w) * h;

  Rng rng(spec.seed);
  std::vector<double> field(n);
  for (double& v : field) v = rng.next_gaussian();

  // Separable box smoothing with border-clamped (renormalized) windows.
  const int half = spec.correlation_length / 2;
  std::vector<double> rows(n), smooth(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half), x1 = std::min(w - 1, x + half);
      double acc = 0.0;
      for (int q = x0; q <= x1; ++q) acc += field[static_cast<size_t>(y) * w + q];
      rows[static_cast<size_t>(y) * w + x] = acc / static_cast<double>(x1 - x0 + 1);
    }
  }
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half), y1 = std::min(h - 1, y + half);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int q = y0; q <= y1; ++q) acc += rows[static_cast<size_t>(q) * w + x];
      smooth[static_cast<size_t>(y) * w + x] = acc / static_cast<double>(y1 - y0 + 1);
    }
  }

  // Exact quantile threshold: the round(n * target / 100) smallest field
  // values become pores (index tiebreak for determinism).
  auto k = static_cast<size_t>(std::llround(static_cast<double>(n) * spec.target_porosity / 100.0));
  k = std::min(k, n);
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return smooth[a] != smooth[b] ? smooth[a] < smooth[b] : a < b;
  });
  BinaryImage out(w, h);
  for (size_t i = 0; i < k; ++i) out.data[order[i]] = 1;
  return out;
}

GrayImage gen_noisy_gray(const BinaryImage& binary, uint8_t solid_level, uint8_t pore_level,
                         double noise_sigma, uint64_t seed) {
  if (solid_level == pore_level) {
    throw ConfigError("gen_noisy_gray: solid_level and pore_level must differ");
  }
  if (noise_sigma < 0.0) throw ConfigError("gen_noisy_gray: noise_sigma must be >= 0");
  Rng rng(seed);
  GrayImage out(binary.width, binary.height);
  for (size_t i = 0; i < binary.data.size(); ++i) {
    double v = binary.data[i] ? pore_level : solid_level;
    if (noise_sigma > 0.0) v += noise_sigma * rng.next_gaussian();
    v = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
    out.data[i] = static_cast<uint8_t>(std::llround(v));
  }
  return out;
}

std::pair<FloatImage, FloatImage> gen_shifted_square(int field_size, int square_side,
                                                     int shift) {
  if (field_size < 1 || square_side < 1 || square_side > field_size) {
    throw ConfigError("gen_shifted_square: square does not fit the field");
  }
  const int r0 = (field_size - square_side) / 2;
  const int c0 = r0;
  const int c0_shifted = c0 + shift;
  if (c0_shifted < 0 || c0_shifted + square_side > field_size) {
    throw ConfigError("gen_shifted_square: shifted square leaves the field");
  }
  FloatImage a(field_size, field_size), b(field_size, field_size);
  for (int y = r0; y < r0 + square_side; ++y) {
    for (int x = 0; x < square_side; ++x) {
      a.at(c0 + x, y) = 1.0;
      b.at(c0_shifted + x, y) = 1.0;
    }
  }
  return {std::move(a), std::move(b)};
}

std::vector<std::string> write_porous_dataset(const std::string& dir, int count,
                                              const PorousSpec& spec) {
  if (count < 1) throw ConfigError("write_porous_dataset: count must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

  std::vector<std::string> paths;
  paths.reserve(count);
  for (int i = 0; i < count; ++i) {
    PorousSpec s = spec;
    s.seed = spec.seed + static_cast<uint64_t>(2 * i);
    const BinaryImage bin = gen_porous_binary(s);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.pgm", i);
    const std::string path = dir + "/" + name;
    save_pgm(gen_noisy_gray(bin, 180, 60, spec.noise_sigma,
                            spec.seed + static_cast<uint64_t>(2 * i) + 1),
             path);
    paths.push_back(path);
  }

  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw IoError("cannot write " + dir + "/manifest.txt");
  manifest << "count=" << count << "\n"
           << "width=" << spec.width << "\n"
           << "height=" << spec.height << "\n"
           << "target_porosity=" << spec.target_porosity << "\n"
           << "correlation_length=" << spec.correlation_length << "\n"
           << "noise_sigma=" << spec.noise_sigma << "\n"
           << "seed=" << spec.seed << "\n";
  manifest << "solid_level=180\npore_level=60\n";
  return paths;
}

}  // namespace ctzip
