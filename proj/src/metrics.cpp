#include "ctzip/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ctzip {

namespace {

void check_same_shape(int wa, int ha, int wb, int hb, const char* op) {
  if (wa != wb || ha != hb) {
    throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(wa) + "x" +
                     std::to_string(ha) + " vs " + std::to_string(wb) + "x" + std::to_string(hb));
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

LaplacianImage::LaplacianImage(int w, int h) : width(w), height(h) {
  data.assign(static_cast<size_t>(w) * h, 0.0);
}

std::string Psnr::str() const { return infinite ? "inf" : fmt_double(db); }

double mse(const FloatImage& a, const FloatImage& b) {
  check_same_shape(a.width, a.height, b.width, b.height, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

Psnr psnr(double mse_value, double max_intensity) {
  if (mse_value < 0.0) throw DataError("psnr: mse must be >= 0");
  if (max_intensity <= 0.0) throw DataError("psnr: max_intensity must be > 0");
  if (mse_value == 0.0) return Psnr{0.0, true};
  return Psnr{20.0 * std::log10(max_intensity) - 10.0 * std::log10(mse_value), false};
}

LaplacianImage laplacian(const FloatImage& img) {
  if (img.width < 3 || img.height < 3) {
    throw ShapeError("laplacian: image must be at least 3x3");
  }
  LaplacianImage out(img.width, img.height);
  const int w = img.width, h = img.height;
  for (int y = 0; y < h; ++y) {
    const int yu = y > 0 ? y - 1 : 0;
    const int yd = y < h - 1 ? y + 1 : h - 1;
    for (int x = 0; x < w; ++x) {
      const int xl = x > 0 ? x - 1 : 0;
      const int xr = x < w - 1 ? x + 1 : w - 1;
      out.at(x, y) = img.at(xl, y) + img.at(xr, y) + img.at(x, yu) + img.at(x, yd) -
                     4.0 * img.at(x, y);
    }
  }
  return out;
}

double msle(const FloatImage& a, const FloatImage& b) {
  check_same_shape(a.width, a.height, b.width, b.height, "msle");
  FloatImage diff(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) diff.data[i] = a.data[i] - b.data[i];
  const LaplacianImage lap = laplacian(diff);
  double acc = 0.0;
  for (double v : lap.data) acc += v * v;
  return acc / static_cast<double>(lap.data.size());
}

LaplacianImage laplacian_diff_map(const FloatImage& a, const FloatImage& b) {
  check_same_shape(a.width, a.height, b.width, b.height, "laplacian_diff_map");
  const LaplacianImage la = laplacian(a);
  const LaplacianImage lb = laplacian(b);
  LaplacianImage out(a.width, a.height);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = la.data[i] - lb.data[i];
  return out;
}

MetricsReport evaluate_pair(const FloatImage& a, const FloatImage& b, double max_intensity,
                            const std::string& id_a, const std::string& id_b) {
  check_same_shape(a.width, a.height, b.width, b.height, "evaluate_pair");
  if (max_intensity <= 0.0) throw DataError("evaluate_pair: max_intensity must be > 0");
  MetricsReport r;
  r.image_id_a = id_a;
  r.image_id_b = id_b;
  r.max_intensity = max_intensity;
  const double scale = max_intensity * max_intensity;
  r.mse = scale * mse(a, b);
  r.msle = scale * msle(a, b);
  r.psnr_db = psnr(r.mse, max_intensity);
  return r;
}

std::string metrics_csv_string(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "image_id_a,image_id_b,max,mse,psnr_db,msle\n";
  for (const MetricsReport& r : reports) {
    out << csv_field(r.image_id_a) << ',' << csv_field(r.image_id_b) << ','
        << fmt_double(r.max_intensity) << ',' << fmt_double(r.mse) << ',' << r.psnr_db.str()
        << ',' << fmt_double(r.msle) << '\n';
  }
  return out.str();
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << metrics_csv_string(reports);
  if (!out) throw IoError("write failed for " + path);
}

void save_laplacian_pgm(const LaplacianImage& map, const std::string& path) {
  double lo = map.data.empty() ? 0.0 : map.data[0];
  double hi = lo;
  for (double v : map.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  GrayImage img(map.width, map.height);
  const double span = hi - lo;
  for (size_t i = 0; i < map.data.size(); ++i) {
    const double code = span > 0.0 ? (map.data[i] - lo) / span * 255.0 : 0.0;
    img.data[i] = static_cast<uint8_t>(std::llround(code));
  }
  save_pgm(img, path);
  std::ofstream side(path + ".scale.txt");
  if (!side) throw IoError("cannot write " + path + ".scale.txt");
  side << "min " << fmt_double(lo) << "\nmax " << fmt_double(hi) << "\n";
}

}  // namespace ctzip
