#include "ctzip/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace ctzip {

namespace {

void check_dims(int w, int h) {
  if (w < 1 || h < 1) {
    throw ShapeError("image dimensions must be >= 1, got " + std::to_string(w) + "x" +
                     std::to_string(h));
  }
}

// Reads one unsigned decimal token from a PGM header, skipping whitespace
// and '#' comments.
long read_pgm_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) {
    throw FormatError("malformed PGM header in " + path);
  }
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1000000000L) throw FormatError("implausible PGM header value in " + path);
    c = in.get();
  }
  if (c != EOF) in.unget();
  return value;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

GrayImage::GrayImage(int w, int h, uint8_t fill) : width(w), height(h) {
  check_dims(w, h);
  data.assign(static_cast<size_t>(w) * h, fill);
}

FloatImage::FloatImage(int w, int h, double fill) : width(w), height(h) {
  check_dims(w, h);
  data.assign(static_cast<size_t>(w) * h, fill);
}

BinaryImage::BinaryImage(int w, int h, uint8_t fill) : width(w), height(h) {
  check_dims(w, h);
  data.assign(static_cast<size_t>(w) * h, fill);
}

GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P' || m1 != '5') throw FormatError("not a binary PGM (P5): " + path);
  long w = read_pgm_token(in, path);
  long h = read_pgm_token(in, path);
  long maxval = read_pgm_token(in, path);
  if (w < 1 || h < 1 || w * h > (1L << 30)) {
    throw FormatError("bad PGM dimensions " + std::to_string(w) + "x" + std::to_string(h) +
                      " in " + path);
  }
  if (maxval != 255) {
    throw UnsupportedError("PGM maxval " + std::to_string(maxval) + " unsupported (need 255): " +
                           path);
  }
  int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) throw FormatError("missing header separator in " + path);
  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw IoError("truncated PGM payload in " + path);
  }
  return img;
}

void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("write failed for " + path);
}

GrayImage binary_to_gray(const BinaryImage& img) {
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] ? 255 : 0;
  return out;
}

void save_binary_pgm(const BinaryImage& img, const std::string& path) {
  save_pgm(binary_to_gray(img), path);
}

GrayImage crop(const GrayImage& img, const CropRect& rect) {
  if (rect.w < 1 || rect.h < 1 || rect.x0 < 0 || rect.y0 < 0 ||
      rect.x0 + rect.w > img.width || rect.y0 + rect.h > img.height) {
    throw BoundsError("crop rect out of bounds");
  }
  GrayImage out(rect.w, rect.h);
  for (int j = 0; j < rect.h; ++j) {
    for (int i = 0; i < rect.w; ++i) {
      out.at(i, j) = img.at(rect.x0 + i, rect.y0 + j);
    }
  }
  return out;
}

FloatImage normalize(const GrayImage& img) {
  FloatImage out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0;
  return out;
}

GrayImage denormalize(const FloatImage& img) {
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = static_cast<uint8_t>(std::llround(clamp01(img.data[i]) * 255.0));
  }
  return out;
}

uint8_t otsu_threshold(const GrayImage& img) {
  int64_t hist[256] = {};
  for (uint8_t v : img.data) ++hist[v];
  int distinct = 0;
  for (int i = 0; i < 256; ++i) distinct += hist[i] != 0;
  if (distinct < 2) throw DegenerateError("constant image has no threshold");

  const auto total = static_cast<int64_t>(img.pixel_count());
  int64_t sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += static_cast<int64_t>(i) * hist[i];

  // Class counts and sums stay integer-exact, so equal splits produce
  // bitwise-equal variances and the smallest-t tie rule is deterministic.
  int64_t c0 = 0, s0 = 0;
  double best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    c0 += hist[t];
    s0 += static_cast<int64_t>(t) * hist[t];
    const int64_t c1 = total - c0;
    if (c0 == 0 || c1 == 0) continue;
    const double mu0 = static_cast<double>(s0) / static_cast<double>(c0);
    const double mu1 = static_cast<double>(sum_all - s0) / static_cast<double>(c1);
    const double d = mu0 - mu1;
    const double var = static_cast<double>(c0) * static_cast<double>(c1) * d * d;
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  return static_cast<uint8_t>(best_t);
}

BinaryImage binarize(const GrayImage& img, uint8_t threshold, bool pore_is_dark) {
  BinaryImage out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const bool dark = img.data[i] <= threshold;
    out.data[i] = (dark == pore_is_dark) ? 1 : 0;
  }
  return out;
}

double porosity(const BinaryImage& img) {
  int64_t pores = 0;
  for (uint8_t b : img.data) pores += b;
  return (100.0 * static_cast<double>(pores)) / static_cast<double>(img.pixel_count());
}

GrayImage mean_shift_filter(const GrayImage& img, int spatial_radius, int range_radius,
                            int max_iter) {
  if (spatial_radius < 1) throw ConfigError("spatial_radius must be >= 1");
  if (range_radius < 1) throw ConfigError("range_radius must be >= 1");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");

  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double cx = x, cy = y;
      double v = img.at(x, y);
      for (int it = 0; it < max_iter; ++it) {
        const int wx = static_cast<int>(std::llround(cx));
        const int wy = static_cast<int>(std::llround(cy));
        const int x0 = std::max(0, wx - spatial_radius);
        const int x1 = std::min(img.width - 1, wx + spatial_radius);
        const int y0 = std::max(0, wy - spatial_radius);
        const int y1 = std::min(img.height - 1, wy + spatial_radius);
        double sx = 0.0, sy = 0.0, sv = 0.0;
        long count = 0;
        for (int qy = y0; qy <= y1; ++qy) {
          for (int qx = x0; qx <= x1; ++qx) {
            const double q = img.at(qx, qy);
            if (std::abs(q - v) <= range_radius) {
              sx += qx;
              sy += qy;
              sv += q;
              ++count;
            }
          }
        }
        if (count == 0) break;
        const double nv = sv / static_cast<double>(count);
        cx = sx / static_cast<double>(count);
        cy = sy / static_cast<double>(count);
        const double shift = std::abs(nv - v);
        v = nv;
        if (shift < 0.5) break;
      }
      const double clamped = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
      out.at(x, y) = static_cast<uint8_t>(std::llround(clamped));
    }
  }
  return out;
}

}  // namespace ctzip
