#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctzip/image.hpp"
#include "ctzip/model.hpp"
#include "ctzip/tensor.hpp"

namespace ctzip {

// On-disk compressed form. Header (little-endian, kArtifactHeaderBytes):
//   magic "CTL1", kind u8, level u8, encoding u8, pad u8,
//   input_h u32, input_w u32, latent_h u32, latent_w u32, latent_c u32,
//   payload length u64.
// Encoding 0 (CNN): per-channel (min, max) as f64 pairs, then one byte per
// latent value in tensor order. Encoding 1 (VQ): indices bit-packed
// MSB-first at ceil(log2 K) bits each, final byte zero-padded.
struct LatentArtifact {
  ModelKind kind = ModelKind::Dcnn;
  CompressionLevel level = CompressionLevel::L1;
  uint8_t encoding = 0;  // 0 = affine 8-bit codes, 1 = bit-packed indices
  int input_h = 0;
  int input_w = 0;
  int latent_h = 0;
  int latent_w = 0;
  int latent_c = 0;
  std::vector<uint8_t> payload;

  size_t total_bytes() const;
};

constexpr size_t kArtifactHeaderBytes = 36;

// Number of bits per bit-packed index: smallest b with 2^b >= K.
int index_bits(int codebook_size);

// Per-channel affine quantization of a (1, H', W', C) latent to 8-bit
// codes: code = round((v - min) / (max - min) * 255); channels with
// max = min store code 0 and unpack to min exactly.
LatentArtifact pack_cnn_latent(const Tensor& latent, CompressionLevel level, int input_h,
                               int input_w);

// value = min + code / 255 * (max - min).
Tensor unpack_cnn_latent(const LatentArtifact& artifact);

LatentArtifact pack_vq_indices(const std::vector<int32_t>& indices, int latent_h, int latent_w,
                               int codebook_size, CompressionLevel level, int input_h,
                               int input_w);

std::vector<int32_t> unpack_vq_indices(const LatentArtifact& artifact, int codebook_size);

// original bytes (1 per pixel) / (payload + header bytes).
double compression_ratio(const GrayImage& original, const LatentArtifact& artifact);

void save_artifact(const LatentArtifact& artifact, const std::string& path);
LatentArtifact load_artifact(const std::string& path);

// End-to-end helpers: encode + pack, and unpack + decode. Decoded quality
// is always measured through this full disk-form round trip so that
// latent quantization error is included.
LatentArtifact compress_image(const AutoencoderModel& model, const FloatImage& image);
FloatImage decompress_artifact(const AutoencoderModel& model, const LatentArtifact& artifact);

}  // namespace ctzip
