#include "ctzip/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

namespace ctzip {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'L', '1'};
constexpr uint8_t kEncodingAffine8 = 0;
constexpr uint8_t kEncodingBitpack = 1;

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

uint64_t read_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f64(std::vector<uint8_t>& out, double v) {
  append_u64(out, std::bit_cast<uint64_t>(v));
}

double read_f64(const uint8_t* p) { return std::bit_cast<double>(read_u64(p)); }

size_t cnn_payload_size(int h, int w, int c) {
  return static_cast<size_t>(c) * 16 + static_cast<size_t>(h) * w * c;
}

size_t vq_payload_size(int h, int w, int bits) {
  return (static_cast<size_t>(h) * w * bits + 7) / 8;
}

}  // namespace

size_t LatentArtifact::total_bytes() const { return kArtifactHeaderBytes + payload.size(); }

int index_bits(int codebook_size) {
  if (codebook_size < 2) throw ConfigError("index_bits: codebook size must be >= 2");
  int bits = 1;
  while ((1 << bits) < codebook_size) ++bits;
  return bits;
}

LatentArtifact pack_cnn_latent(const Tensor& latent, CompressionLevel level, int input_h,
                               int input_w) {
  if (latent.n != 1) throw ShapeError("pack_cnn_latent: expected a single-image latent");
  for (double v : latent.data) {
    if (!std::isfinite(v)) throw DataError("pack_cnn_latent: non-finite latent value");
  }
  const int h = latent.h, w = latent.w, c = latent.c;
  LatentArtifact art;
  art.kind = ModelKind::Dcnn;
  art.level = level;
  art.encoding = kEncodingAffine8;
  art.input_h = input_h;
  art.input_w = input_w;
  art.latent_h = h;
  art.latent_w = w;
  art.latent_c = c;
  art.payload.reserve(cnn_payload_size(h, w, c));

  std::vector<double> lo(c), hi(c);
  for (int ic = 0; ic < c; ++ic) {
    lo[ic] = latent.data[ic];
    hi[ic] = latent.data[ic];
  }
  for (size_t i = 0; i < latent.size(); ++i) {
    const int ic = static_cast<int>(i % c);
    lo[ic] = std::min(lo[ic], latent.data[i]);
    hi[ic] = std::max(hi[ic], latent.data[i]);
  }
  for (int ic = 0; ic < c; ++ic) {
    append_f64(art.payload, lo[ic]);
    append_f64(art.payload, hi[ic]);
  }
  for (size_t i = 0; i < latent.size(); ++i) {
    const int ic = static_cast<int>(i % c);
    const double span = hi[ic] - lo[ic];
    uint8_t code = 0;
    if (span > 0.0) {
      code = static_cast<uint8_t>(std::llround((latent.data[i] - lo[ic]) / span * 255.0));
    }
    art.payload.push_back(code);
  }
  return art;
}

Tensor unpack_cnn_latent(const LatentArtifact& artifact) {
  if (artifact.kind != ModelKind::Dcnn || artifact.encoding != kEncodingAffine8) {
    throw FormatError("unpack_cnn_latent: artifact is not a CNN latent");
  }
  const int h = artifact.latent_h, w = artifact.latent_w, c = artifact.latent_c;
  if (artifact.payload.size() != cnn_payload_size(h, w, c)) {
    throw FormatError("unpack_cnn_latent: payload length mismatch");
  }
  std::vector<double> lo(c), hi(c);
  for (int ic = 0; ic < c; ++ic) {
    lo[ic] = read_f64(artifact.payload.data() + 16 * static_cast<size_t>(ic));
    hi[ic] = read_f64(artifact.payload.data() + 16 * static_cast<size_t>(ic) + 8);
  }
  Tensor latent(1, h, w, c);
  const uint8_t* codes = artifact.payload.data() + static_cast<size_t>(c) * 16;
  for (size_t i = 0; i < latent.size(); ++i) {
    const int ic = static_cast<int>(i % c);
    latent.data[i] = lo[ic] + static_cast<double>(codes[i]) / 255.0 * (hi[ic] - lo[ic]);
  }
  return latent;
}

LatentArtifact pack_vq_indices(const std::vector<int32_t>& indices, int latent_h, int latent_w,
                               int codebook_size, CompressionLevel level, int input_h,
                               int input_w) {
  if (indices.size() != static_cast<size_t>(latent_h) * latent_w) {
    throw ShapeError("pack_vq_indices: index count does not match the grid");
  }
  const int bits = index_bits(codebook_size);
  for (int32_t idx : indices) {
    if (idx < 0 || idx >= codebook_size) {
      throw DataError("pack_vq_indices: index " + std::to_string(idx) + " out of range for K=" +
                      std::to_string(codebook_size));
    }
  }
  LatentArtifact art;
  art.kind = ModelKind::Vqvae;
  art.level = level;
  art.encoding = kEncodingBitpack;
  art.input_h = input_h;
  art.input_w = input_w;
  art.latent_h = latent_h;
  art.latent_w = latent_w;
  art.latent_c = latent_channels(level);
  art.payload.reserve(vq_payload_size(latent_h, latent_w, bits));
  uint64_t acc = 0;
  int nbits = 0;
  for (int32_t idx : indices) {
    acc = (acc << bits) | static_cast<uint32_t>(idx);
    nbits += bits;
    while (nbits >= 8) {
      art.payload.push_back(static_cast<uint8_t>((acc >> (nbits - 8)) & 0xff));
      nbits -= 8;
    }
  }
  if (nbits > 0) {
    art.payload.push_back(static_cast<uint8_t>((acc << (8 - nbits)) & 0xff));
  }
  return art;
}

std::vector<int32_t> unpack_vq_indices(const LatentArtifact& artifact, int codebook_size) {
  if (artifact.kind != ModelKind::Vqvae || artifact.encoding != kEncodingBitpack) {
    throw FormatError("unpack_vq_indices: artifact is not a VQ index grid");
  }
  const int bits = index_bits(codebook_size);
  const size_t count = static_cast<size_t>(artifact.latent_h) * artifact.latent_w;
  if (artifact.payload.size() != vq_payload_size(artifact.latent_h, artifact.latent_w, bits)) {
    throw FormatError("unpack_vq_indices: payload length mismatch");
  }
  std::vector<int32_t> indices(count);
  uint64_t acc = 0;
  int nbits = 0;
  size_t pos = 0;
  const uint32_t mask = (1u << bits) - 1;
  for (size_t i = 0; i < count; ++i) {
    while (nbits < bits) {
      acc = (acc << 8) | artifact.payload[pos++];
      nbits += 8;
    }
    const auto idx = static_cast<int32_t>((acc >> (nbits - bits)) & mask);
    nbits -= bits;
    if (idx >= codebook_size) {
      throw FormatError("unpack_vq_indices: decoded index " + std::to_string(idx) +
                        " out of range for K=" + std::to_string(codebook_size));
    }
    indices[i] = idx;
  }
  return indices;
}

double compression_ratio(const GrayImage& original, const LatentArtifact& artifact) {
  return static_cast<double>(original.pixel_count()) /
         static_cast<double>(artifact.total_bytes());
}

void save_artifact(const LatentArtifact& artifact, const std::string& path) {
  std::vector<uint8_t> header;
  header.reserve(kArtifactHeaderBytes);
  header.insert(header.end(), kMagic, kMagic + 4);
  header.push_back(static_cast<uint8_t>(artifact.kind));
  header.push_back(static_cast<uint8_t>(artifact.level));
  header.push_back(artifact.encoding);
  header.push_back(0);
  append_u32(header, static_cast<uint32_t>(artifact.input_h));
  append_u32(header, static_cast<uint32_t>(artifact.input_w));
  append_u32(header, static_cast<uint32_t>(artifact.latent_h));
  append_u32(header, static_cast<uint32_t>(artifact.latent_w));
  append_u32(header, static_cast<uint32_t>(artifact.latent_c));
  append_u64(header, artifact.payload.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(artifact.payload.data()),
            static_cast<std::streamsize>(artifact.payload.size()));
  if (!out) throw IoError("write failed for " + path);
}

LatentArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  uint8_t header[kArtifactHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kArtifactHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kArtifactHeaderBytes)) {
    throw IoError("truncated artifact " + path);
  }
  if (!std::equal(header, header + 4, kMagic)) {
    throw FormatError("bad artifact magic in " + path);
  }
  const uint8_t kind_raw = header[4];
  const uint8_t level_raw = header[5];
  const uint8_t encoding = header[6];
  if (kind_raw > 1 || level_raw < 1 || level_raw > 3 || encoding > 1) {
    throw FormatError("invalid artifact header fields in " + path);
  }
  LatentArtifact art;
  art.kind = static_cast<ModelKind>(kind_raw);
  art.level = static_cast<CompressionLevel>(level_raw);
  art.encoding = encoding;
  art.input_h = static_cast<int>(read_u32(header + 8));
  art.input_w = static_cast<int>(read_u32(header + 12));
  art.latent_h = static_cast<int>(read_u32(header + 16));
  art.latent_w = static_cast<int>(read_u32(header + 20));
  art.latent_c = static_cast<int>(read_u32(header + 24));
  const uint64_t payload_len = read_u64(header + 28);
  if (payload_len > (1ULL << 32)) throw FormatError("implausible payload length in " + path);
  art.payload.resize(payload_len);
  in.read(reinterpret_cast<char*>(art.payload.data()),
          static_cast<std::streamsize>(payload_len));
  if (in.gcount() != static_cast<std::streamsize>(payload_len)) {
    throw IoError("truncated artifact payload in " + path);
  }
  if (in.peek() != EOF) throw FormatError("trailing bytes after artifact payload in " + path);
  return art;
}

LatentArtifact compress_image(const AutoencoderModel& model, const FloatImage& image) {
  const Latent lat = encode(model, image);
  if (model.kind == ModelKind::Dcnn) {
    return pack_cnn_latent(lat.tensor, model.level, image.height, image.width);
  }
  return pack_vq_indices(lat.indices, lat.h, lat.w, model.codebook_k, model.level, image.height,
                         image.width);
}

FloatImage decompress_artifact(const AutoencoderModel& model, const LatentArtifact& artifact) {
  if (artifact.kind != model.kind) {
    throw FormatError("decompress_artifact: artifact kind does not match the checkpoint");
  }
  if (artifact.level != model.level) {
    throw FormatError("decompress_artifact: artifact level does not match the checkpoint");
  }
  if (artifact.input_h != model.input_size || artifact.input_w != model.input_size) {
    throw FormatError("decompress_artifact: artifact input size does not match the checkpoint");
  }
  Latent lat;
  lat.kind = model.kind;
  lat.h = artifact.latent_h;
  lat.w = artifact.latent_w;
  lat.c = artifact.latent_c;
  if (model.kind == ModelKind::Dcnn) {
    lat.tensor = unpack_cnn_latent(artifact);
  } else {
    lat.indices = unpack_vq_indices(artifact, model.codebook_k);
  }
  return decode(model, lat);
}

}  // namespace ctzip
