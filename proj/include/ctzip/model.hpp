#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctzip/image.hpp"
#include "ctzip/nn.hpp"
#include "ctzip/tensor.hpp"

namespace ctzip {

enum class ModelKind : uint8_t { Dcnn = 0, Vqvae = 1 };

// Latent geometry per level, relative to the input size: spatial factor
// 4/8/16 and channel count 8/4/2.
enum class CompressionLevel : uint8_t { L1 = 1, L2 = 2, L3 = 3 };

int spatial_factor(CompressionLevel level);   // 4, 8, 16
int latent_channels(CompressionLevel level);  // 8, 4, 2
int pool_stages(CompressionLevel level);      // 2, 3, 4
int default_codebook_size(CompressionLevel level);  // 128, 256, 512

const char* kind_name(ModelKind kind);    // "dcnn" / "vqvae"
const char* level_name(CompressionLevel level);  // "l1" / "l2" / "l3"

// ---- layers ---------------------------------------------------------------

enum class LayerKind : uint8_t {
  Conv = 0,
  TConv = 1,
  MaxPool = 2,
  Upsample = 3,
  Relu = 4,
  Sigmoid = 5,
};

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int cin = 0;   // conv/tconv only
  int cout = 0;  // conv/tconv only
  int stride = 1;
};

// One step of the fixed layer vocabulary. forward() caches what backward()
// needs and must be paired with it; infer() is the cache-free path and is
// safe on a shared const model.
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;
  virtual std::vector<Parameter*> params() { return {}; }

  const LayerSpec& spec() const { return spec_; }

 protected:
  LayerSpec spec_;
};

std::unique_ptr<Layer> make_conv_layer(int cin, int cout, int stride, Rng& rng);
std::unique_ptr<Layer> make_tconv_layer(int cin, int cout, Rng& rng);
std::unique_ptr<Layer> make_layer(LayerKind kind);  // parameterless kinds

// ---- model ------------------------------------------------------------------

// Compressed form of one image. DCNN latents are real-valued tensors;
// VQVAE latents are an index grid over the codebook (the quantized rows
// travel along when produced by encode, and are reconstructed from the
// codebook otherwise).
struct Latent {
  ModelKind kind = ModelKind::Dcnn;
  int h = 0, w = 0, c = 0;
  Tensor tensor;
  std::vector<int32_t> indices;
};

// Intermediate state of a VQVAE training forward pass, needed by backward.
struct VqForwardState {
  Tensor z_e;
  VQResult vq;
};

struct AutoencoderModel {
  ModelKind kind = ModelKind::Dcnn;
  CompressionLevel level = CompressionLevel::L1;
  int input_size = 512;
  int base_width = 16;
  uint64_t seed = 1;
  double vq_beta = 0.25;
  std::vector<std::unique_ptr<Layer>> encoder;
  std::vector<std::unique_ptr<Layer>> decoder;
  Parameter codebook;  // value shape (1, 1, K, D); empty for DCNN
  int codebook_k = 0;
  int codebook_d = 0;

  std::vector<Parameter*> parameters();
  Codebook codebook_view() const;

  // Training path: runs encoder (-> quantization for VQVAE) -> decoder with
  // layer caches populated; vq_state must be non-null for VQVAE models.
  Tensor forward_train(const Tensor& x, VqForwardState* vq_state);

  // Propagates the loss gradient at the decoder output back through the
  // whole model, accumulating parameter gradients (straight-through across
  // the quantization layer).
  void backward_train(const Tensor& grad_output, const VqForwardState* vq_state);

  // Cache-free batch forward; returns the raw decoder output (DCNN outputs
  // pass through sigmoid; VQVAE outputs are unclamped).
  Tensor infer_batch(const Tensor& x) const;
};

AutoencoderModel build_dcnn(CompressionLevel level, int input_size, int base_width = 16,
                            uint64_t seed = 1);

// codebook_size 0 selects the level default (128/256/512).
AutoencoderModel build_vqvae(CompressionLevel level, int input_size, int codebook_size = 0,
                             int base_width = 16, uint64_t seed = 1);

// (1, H, W, 1) tensor view of an image and back; clamp01 clips decoder
// outputs that fall outside [0, 1].
Tensor image_to_tensor(const FloatImage& img);
FloatImage tensor_to_image(const Tensor& t, bool clamp01 = false);

Latent encode(const AutoencoderModel& model, const FloatImage& image);

// Output values in [0, 1]: the DCNN head is a sigmoid; VQVAE outputs are
// clamped at evaluation time.
FloatImage decode(const AutoencoderModel& model, const Latent& latent);

int64_t count_params(const AutoencoderModel& model);

// FNV-1a over all parameter value bytes; used by reproducibility checks.
uint64_t parameter_fingerprint(const AutoencoderModel& model);

// Checkpoint format "CTZ1": magic, version, model configuration, layer
// table, then all parameter values (and the codebook) as little-endian
// 64-bit reals. Bit-exact round trip.
void save_checkpoint(const AutoencoderModel& model, const std::string& path);
AutoencoderModel load_checkpoint(const std::string& path);

}  // namespace ctzip
