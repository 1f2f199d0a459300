#include "ctzip/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

namespace ctzip {

namespace {

class ConvLayer final : public Layer {
 public:
  ConvLayer(int cin, int cout, int stride, Rng& rng)
      : Layer({LayerKind::Conv, cin, cout, stride}),
        weights_(glorot_conv_init(cin, cout, rng)),
        bias_(Tensor(1, 1, 1, cout)) {}

  Tensor forward(const Tensor& x) override {
    input_ = x;
    return conv2d(x, weights_.value, bias_.value, spec_.stride);
  }
  Tensor backward(const Tensor& grad_out) override {
    return conv2d_backward(input_, weights_.value, spec_.stride, grad_out, weights_.grad,
                           bias_.grad);
  }
  Tensor infer(const Tensor& x) const override {
    return conv2d(x, weights_.value, bias_.value, spec_.stride);
  }
  std::vector<Parameter*> params() override { return {&weights_, &bias_}; }

 private:
  Parameter weights_;
  Parameter bias_;
  Tensor input_;
};

class TConvLayer final : public Layer {
 public:
  TConvLayer(int cin, int cout, Rng& rng)
      : Layer({LayerKind::TConv, cin, cout, 2}),
        weights_(glorot_conv_init(cin, cout, rng)),
        bias_(Tensor(1, 1, 1, cout)) {}

  Tensor forward(const Tensor& x) override {
    input_ = x;
    return transposed_conv2d(x, weights_.value, bias_.value);
  }
  Tensor backward(const Tensor& grad_out) override {
    return transposed_conv2d_backward(input_, weights_.value, grad_out, weights_.grad,
                                      bias_.grad);
  }
  Tensor infer(const Tensor& x) const override {
    return transposed_conv2d(x, weights_.value, bias_.value);
  }
  std::vector<Parameter*> params() override { return {&weights_, &bias_}; }

 private:
  Parameter weights_;
  Parameter bias_;
  Tensor input_;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer() : Layer({LayerKind::MaxPool, 0, 0, 2}) {}

  Tensor forward(const Tensor& x) override {
    input_ = x;
    return maxpool2x2(x, &argmax_);
  }
  Tensor backward(const Tensor& grad_out) override {
    return maxpool2x2_backward(grad_out, input_, argmax_);
  }
  Tensor infer(const Tensor& x) const override { return maxpool2x2(x); }

 private:
  Tensor input_;
  std::vector<int32_t> argmax_;
};

class UpsampleLayer final : public Layer {
 public:
  UpsampleLayer() : Layer({LayerKind::Upsample, 0, 0, 2}) {}

  Tensor forward(const Tensor& x) override { return upsample_nearest2x(x); }
  Tensor backward(const Tensor& grad_out) override {
    return upsample_nearest2x_backward(grad_out);
  }
  Tensor infer(const Tensor& x) const override { return upsample_nearest2x(x); }
};

class ReluLayer final : public Layer {
 public:
  ReluLayer() : Layer({LayerKind::Relu, 0, 0, 1}) {}

  Tensor forward(const Tensor& x) override {
    input_ = x;
    return relu(x);
  }
  Tensor backward(const Tensor& grad_out) override { return relu_backward(grad_out, input_); }
  Tensor infer(const Tensor& x) const override { return relu(x); }

 private:
  Tensor input_;
};

class SigmoidLayer final : public Layer {
 public:
  SigmoidLayer() : Layer({LayerKind::Sigmoid, 0, 0, 1}) {}

  Tensor forward(const Tensor& x) override {
    output_ = sigmoid(x);
    return output_;
  }
  Tensor backward(const Tensor& grad_out) override {
    return sigmoid_backward(grad_out, output_);
  }
  Tensor infer(const Tensor& x) const override { return sigmoid(x); }

 private:
  Tensor output_;
};

void check_build_args(CompressionLevel level, int input_size, int base_width) {
  const int factor = spatial_factor(level);
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (input_size < factor || input_size % factor != 0) {
    throw ConfigError("input size " + std::to_string(input_size) + " not divisible by the " +
                      level_name(level) + " spatial factor " + std::to_string(factor));
  }
}

// VQVAE stage widths grow with depth: base, 2*base, then capped at 4*base.
std::vector<int> vq_stage_widths(int stages, int base) {
  std::vector<int> widths;
  for (int i = 0; i < stages; ++i) widths.push_back(base * std::min(1 << i, 4));
  return widths;
}

}  // namespace

int spatial_factor(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::L1: return 4;
    case CompressionLevel::L2: return 8;
    case CompressionLevel::L3: return 16;
  }
  throw ConfigError("invalid compression level");
}

int latent_channels(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::L1: return 8;
    case CompressionLevel::L2: return 4;
    case CompressionLevel::L3: return 2;
  }
  throw ConfigError("invalid compression level");
}

int pool_stages(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::L1: return 2;
    case CompressionLevel::L2: return 3;
    case CompressionLevel::L3: return 4;
  }
  throw ConfigError("invalid compression level");
}

int default_codebook_size(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::L1: return 128;
    case CompressionLevel::L2: return 256;
    case CompressionLevel::L3: return 512;
  }
  throw ConfigError("invalid compression level");
}

const char* kind_name(ModelKind kind) {
  return kind == ModelKind::Dcnn ? "dcnn" : "vqvae";
}

const char* level_name(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::L1: return "l1";
    case CompressionLevel::L2: return "l2";
    case CompressionLevel::L3: return "l3";
  }
  return "?";
}

std::unique_ptr<Layer> make_conv_layer(int cin, int cout, int stride, Rng& rng) {
  return std::make_unique<ConvLayer>(cin, cout, stride, rng);
}

std::unique_ptr<Layer> make_tconv_layer(int cin, int cout, Rng& rng) {
  return std::make_unique<TConvLayer>(cin, cout, rng);
}

std::unique_ptr<Layer> make_layer(LayerKind kind) {
  switch (kind) {
    case LayerKind::MaxPool: return std::make_unique<MaxPoolLayer>();
    case LayerKind::Upsample: return std::make_unique<UpsampleLayer>();
    case LayerKind::Relu: return std::make_unique<ReluLayer>();
    case LayerKind::Sigmoid: return std::make_unique<SigmoidLayer>();
    default: throw ConfigError("make_layer: kind requires channel arguments");
  }
}

std::vector<Parameter*> AutoencoderModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : encoder) {
    for (Parameter* p : l->params()) out.push_back(p);
  }
  for (auto& l : decoder) {
    for (Parameter* p : l->params()) out.push_back(p);
  }
  if (codebook_k > 0) out.push_back(&codebook);
  return out;
}

Codebook AutoencoderModel::codebook_view() const {
  Codebook cb(codebook_k, codebook_d);
  cb.vectors = codebook.value.data;
  return cb;
}

Tensor AutoencoderModel::forward_train(const Tensor& x, VqForwardState* vq_state) {
  Tensor z = x;
  for (auto& l : encoder) z = l->forward(z);
  if (kind == ModelKind::Vqvae) {
    if (!vq_state) throw ConfigError("forward_train: VQVAE requires a VqForwardState");
    vq_state->z_e = z;
    vq_state->vq = vector_quantize(z, codebook_view(), vq_beta);
    z = vq_state->vq.quantized;
  }
  for (auto& l : decoder) z = l->forward(z);
  return z;
}

void AutoencoderModel::backward_train(const Tensor& grad_output, const VqForwardState* vq_state) {
  Tensor g = grad_output;
  for (auto it = decoder.rbegin(); it != decoder.rend(); ++it) g = (*it)->backward(g);
  if (kind == ModelKind::Vqvae) {
    if (!vq_state) throw ConfigError("backward_train: VQVAE requires the forward state");
    const Codebook cb = codebook_view();
    g = vq_backward(g, vq_state->z_e, vq_state->vq, cb, vq_beta, codebook.grad.data);
  }
  for (auto it = encoder.rbegin(); it != encoder.rend(); ++it) g = (*it)->backward(g);
}

Tensor AutoencoderModel::infer_batch(const Tensor& x) const {
  Tensor z = x;
  for (const auto& l : encoder) z = l->infer(z);
  if (kind == ModelKind::Vqvae) {
    z = vector_quantize(z, codebook_view(), vq_beta).quantized;
  }
  for (const auto& l : decoder) z = l->infer(z);
  return z;
}

AutoencoderModel build_dcnn(CompressionLevel level, int input_size, int base_width,
                            uint64_t seed) {
  check_build_args(level, input_size, base_width);
  AutoencoderModel m;
  m.kind = ModelKind::Dcnn;
  m.level = level;
  m.input_size = input_size;
  m.base_width = base_width;
  m.seed = seed;
  Rng rng(seed);
  const int stages = pool_stages(level);
  std::vector<int> widths(static_cast<size_t>(stages), base_width);
  widths.back() = latent_channels(level);
  int cin = 1;
  for (int w : widths) {
    m.encoder.push_back(make_conv_layer(cin, w, 1, rng));
    m.encoder.push_back(make_layer(LayerKind::Relu));
    m.encoder.push_back(make_layer(LayerKind::MaxPool));
    cin = w;
  }
  for (int i = 0; i < stages; ++i) {
    m.decoder.push_back(make_conv_layer(cin, base_width, 1, rng));
    m.decoder.push_back(make_layer(LayerKind::Relu));
    m.decoder.push_back(make_layer(LayerKind::Upsample));
    cin = base_width;
  }
  m.decoder.push_back(make_conv_layer(cin, 1, 1, rng));
  m.decoder.push_back(make_layer(LayerKind::Sigmoid));
  return m;
}

AutoencoderModel build_vqvae(CompressionLevel level, int input_size, int codebook_size,
                             int base_width, uint64_t seed) {
  check_build_args(level, input_size, base_width);
  const int k = codebook_size == 0 ? default_codebook_size(level) : codebook_size;
  if (k < 2) throw ConfigError("codebook size must be >= 2, got " + std::to_string(k));
  AutoencoderModel m;
  m.kind = ModelKind::Vqvae;
  m.level = level;
  m.input_size = input_size;
  m.base_width = base_width;
  m.seed = seed;
  Rng rng(seed);
  const int stages = pool_stages(level);
  const int d = latent_channels(level);
  const std::vector<int> widths = vq_stage_widths(stages, base_width);
  int cin = 1;
  for (int w : widths) {
    m.encoder.push_back(make_conv_layer(cin, w, 2, rng));
    m.encoder.push_back(make_layer(LayerKind::Relu));
    cin = w;
  }
  m.encoder.push_back(make_conv_layer(cin, d, 1, rng));
  cin = d;
  for (auto it = widths.rbegin(); it != widths.rend(); ++it) {
    m.decoder.push_back(make_tconv_layer(cin, *it, rng));
    m.decoder.push_back(make_layer(LayerKind::Relu));
    cin = *it;
  }
  m.decoder.push_back(make_conv_layer(cin, 1, 1, rng));
  const Codebook cb = codebook_init(k, d, rng);
  Tensor cb_tensor(1, 1, k, d);
  cb_tensor.data = cb.vectors;
  m.codebook = Parameter(std::move(cb_tensor));
  m.codebook_k = k;
  m.codebook_d = d;
  return m;
}

Tensor image_to_tensor(const FloatImage& img) {
  Tensor t(1, img.height, img.width, 1);
  t.data = img.data;
  return t;
}

FloatImage tensor_to_image(const Tensor& t, bool clamp01) {
  if (t.n != 1 || t.c != 1) throw ShapeError("tensor_to_image: need shape (1,H,W,1)");
  FloatImage img(t.w, t.h);
  img.data = t.data;
  if (clamp01) {
    for (double& v : img.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
  return img;
}

Latent encode(const AutoencoderModel& model, const FloatImage& image) {
  if (image.width != model.input_size || image.height != model.input_size) {
    throw ShapeError("encode: image is " + std::to_string(image.width) + "x" +
                     std::to_string(image.height) + " but the model expects " +
                     std::to_string(model.input_size));
  }
  Tensor z = image_to_tensor(image);
  for (const auto& l : model.encoder) z = l->infer(z);
  Latent lat;
  lat.kind = model.kind;
  lat.h = z.h;
  lat.w = z.w;
  lat.c = z.c;
  if (model.kind == ModelKind::Dcnn) {
    lat.tensor = std::move(z);
  } else {
    VQResult vq = vector_quantize(z, model.codebook_view(), model.vq_beta);
    lat.tensor = std::move(vq.quantized);
    lat.indices = std::move(vq.indices);
  }
  return lat;
}

FloatImage decode(const AutoencoderModel& model, const Latent& latent) {
  if (latent.kind != model.kind) throw ShapeError("decode: latent kind does not match model");
  const int lh = model.input_size / spatial_factor(model.level);
  const int lc = latent_channels(model.level);
  if (latent.h != lh || latent.w != lh || latent.c != lc) {
    throw ShapeError("decode: latent " + std::to_string(latent.h) + "x" +
                     std::to_string(latent.w) + "x" + std::to_string(latent.c) +
                     " does not match level " + level_name(model.level));
  }
  Tensor z;
  if (model.kind == ModelKind::Dcnn) {
    if (latent.tensor.n != 1 || latent.tensor.h != lh || latent.tensor.w != lh ||
        latent.tensor.c != lc) {
      throw ShapeError("decode: latent tensor shape mismatch");
    }
    z = latent.tensor;
  } else if (latent.tensor.size() == static_cast<size_t>(lh) * lh * lc) {
    z = latent.tensor;
  } else {
    if (latent.indices.size() != static_cast<size_t>(lh) * lh) {
      throw ShapeError("decode: index grid size mismatch");
    }
    z = Tensor(1, lh, lh, lc);
    for (size_t s = 0; s < latent.indices.size(); ++s) {
      const int32_t k = latent.indices[s];
      if (k < 0 || k >= model.codebook_k) {
        throw DataError("decode: codebook index " + std::to_string(k) + " out of range");
      }
      const double* row = model.codebook.value.data.data() + static_cast<size_t>(k) * lc;
      std::copy(row, row + lc, z.data.data() + s * lc);
    }
  }
  for (const auto& l : model.decoder) z = l->infer(z);
  return tensor_to_image(z, /*clamp01=*/model.kind == ModelKind::Vqvae);
}

int64_t count_params(const AutoencoderModel& model) {
  int64_t total = 0;
  // parameters() is non-const only because callers mutate through it;
  // counting needs the same traversal.
  auto& m = const_cast<AutoencoderModel&>(model);
  for (Parameter* p : m.parameters()) total += static_cast<int64_t>(p->value.size());
  return total;
}

uint64_t parameter_fingerprint(const AutoencoderModel& model) {
  auto& m = const_cast<AutoencoderModel&>(model);
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (Parameter* p : m.parameters()) {
    for (double v : p->value.data) {
      const uint64_t bits = std::bit_cast<uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        hash ^= (bits >> (8 * i)) & 0xff;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

namespace {

constexpr char kMagic[4] = {'C', 'T', 'Z', '1'};
constexpr uint32_t kVersion = 1;

void put_u8(std::ostream& out, uint8_t v) { out.put(static_cast<char>(v)); }

void put_u16(std::ostream& out, uint16_t v) {
  for (int i = 0; i < 2; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::ostream& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

uint8_t get_u8(std::istream& in, const std::string& path) {
  const int c = in.get();
  if (c == EOF) throw IoError("truncated checkpoint " + path);
  return static_cast<uint8_t>(c);
}

uint16_t get_u16(std::istream& in, const std::string& path) {
  uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(get_u8(in, path)) << (8 * i);
  return v;
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(get_u8(in, path)) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& path) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(get_u8(in, path)) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  return std::bit_cast<double>(get_u64(in, path));
}

void put_layer_table(std::ostream& out, const std::vector<std::unique_ptr<Layer>>& layers) {
  for (const auto& l : layers) {
    const LayerSpec& s = l->spec();
    put_u8(out, static_cast<uint8_t>(s.kind));
    put_u8(out, static_cast<uint8_t>(s.stride));
    put_u16(out, 0);
    put_u32(out, static_cast<uint32_t>(s.cin));
    put_u32(out, static_cast<uint32_t>(s.cout));
  }
}

void check_layer_table(std::istream& in, const std::vector<std::unique_ptr<Layer>>& layers,
                       const std::string& path) {
  for (const auto& l : layers) {
    const LayerSpec& s = l->spec();
    const uint8_t kind = get_u8(in, path);
    const uint8_t stride = get_u8(in, path);
    get_u16(in, path);
    const uint32_t cin = get_u32(in, path);
    const uint32_t cout = get_u32(in, path);
    if (kind != static_cast<uint8_t>(s.kind) || stride != static_cast<uint8_t>(s.stride) ||
        cin != static_cast<uint32_t>(s.cin) || cout != static_cast<uint32_t>(s.cout)) {
      throw FormatError("checkpoint layer table does not match its configuration: " + path);
    }
  }
}

}  // namespace

void save_checkpoint(const AutoencoderModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u8(out, static_cast<uint8_t>(model.kind));
  put_u8(out, static_cast<uint8_t>(model.level));
  put_u16(out, 0);
  put_u32(out, static_cast<uint32_t>(model.input_size));
  put_u32(out, static_cast<uint32_t>(model.base_width));
  put_u32(out, static_cast<uint32_t>(model.codebook_k));
  put_u32(out, static_cast<uint32_t>(model.codebook_d));
  put_u64(out, model.seed);
  put_f64(out, model.vq_beta);
  put_u32(out, static_cast<uint32_t>(model.encoder.size()));
  put_u32(out, static_cast<uint32_t>(model.decoder.size()));
  put_layer_table(out, model.encoder);
  put_layer_table(out, model.decoder);
  auto& m = const_cast<AutoencoderModel&>(model);
  for (Parameter* p : m.parameters()) {
    for (double v : p->value.data) put_f64(out, v);
  }
  if (!out) throw IoError("write failed for " + path);
}

AutoencoderModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw IoError("truncated checkpoint " + path);
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw FormatError("bad checkpoint magic in " + path);
  }
  const uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " +
                      path);
  }
  const uint8_t kind_raw = get_u8(in, path);
  const uint8_t level_raw = get_u8(in, path);
  get_u16(in, path);
  if (kind_raw > 1 || level_raw < 1 || level_raw > 3) {
    throw FormatError("invalid kind/level in " + path);
  }
  const auto kind = static_cast<ModelKind>(kind_raw);
  const auto level = static_cast<CompressionLevel>(level_raw);
  const auto input_size = static_cast<int>(get_u32(in, path));
  const auto base_width = static_cast<int>(get_u32(in, path));
  const auto cb_k = static_cast<int>(get_u32(in, path));
  const auto cb_d = static_cast<int>(get_u32(in, path));
  const uint64_t seed = get_u64(in, path);
  const double beta = get_f64(in, path);
  const auto n_enc = get_u32(in, path);
  const auto n_dec = get_u32(in, path);

  AutoencoderModel model = kind == ModelKind::Dcnn
                               ? build_dcnn(level, input_size, base_width, seed)
                               : build_vqvae(level, input_size, cb_k, base_width, seed);
  model.vq_beta = beta;
  if (model.encoder.size() != n_enc || model.decoder.size() != n_dec ||
      model.codebook_k != cb_k || model.codebook_d != cb_d) {
    throw FormatError("checkpoint structure does not match its configuration: " + path);
  }
  check_layer_table(in, model.encoder, path);
  check_layer_table(in, model.decoder, path);
  for (Parameter* p : model.parameters()) {
    for (double& v : p->value.data) v = get_f64(in, path);
  }
  return model;
}

}  // namespace ctzip
