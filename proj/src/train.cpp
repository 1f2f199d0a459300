#include "ctzip/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "ctzip/nn.hpp"
#include "ctzip/rng.hpp"

namespace ctzip {

namespace {

void validate_config(const TrainConfig& config) {
  if (config.epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (!(config.split_fraction > 0.0 && config.split_fraction < 1.0)) {
    throw ConfigError("train config: split_fraction must be in (0, 1)");
  }
}

Tensor stack_batch(const std::vector<const FloatImage*>& batch) {
  const int h = batch[0]->height, w = batch[0]->width;
  Tensor t(static_cast<int>(batch.size()), h, w, 1);
  for (size_t b = 0; b < batch.size(); ++b) {
    std::copy(batch[b]->data.begin(), batch[b]->data.end(),
              t.data.begin() + static_cast<ptrdiff_t>(b * batch[b]->data.size()));
  }
  return t;
}

}  // namespace

std::pair<std::vector<FloatImage>, std::vector<FloatImage>> split_dataset(
    const std::vector<FloatImage>& images, double fraction, uint64_t seed) {
  if (images.size() < 2) throw ShapeError("split_dataset: need at least 2 images");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split_dataset: fraction must be in (0, 1)");
  }
  const size_t n = images.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  for (size_t i = n - 1; i > 0; --i) {
    const uint64_t j = rng.next_below(i + 1);
    std::swap(order[i], order[j]);
  }
  auto train_n = static_cast<size_t>(std::floor(static_cast<double>(n) * fraction));
  train_n = std::clamp<size_t>(train_n, 1, n - 1);

  std::vector<FloatImage> train_part, val_part;
  train_part.reserve(train_n);
  val_part.reserve(n - train_n);
  for (size_t i = 0; i < n; ++i) {
    (i < train_n ? train_part : val_part).push_back(images[order[i]]);
  }
  return {std::move(train_part), std::move(val_part)};
}

AutoencoderModel build_model(const TrainConfig& config, int input_size) {
  if (config.kind == ModelKind::Dcnn) {
    return build_dcnn(config.level, input_size, config.base_width, config.seed);
  }
  return build_vqvae(config.level, input_size, config.codebook_size, config.base_width,
                     config.seed);
}

double eval_loss(const AutoencoderModel& model, const FloatImage& image) {
  if (image.width != model.input_size || image.height != model.input_size) {
    throw ShapeError("eval_loss: image size does not match model input");
  }
  const Tensor x = image_to_tensor(image);
  if (model.kind == ModelKind::Dcnn) {
    return bce_loss(model.infer_batch(x), x, nullptr);
  }
  Tensor z = x;
  for (const auto& layer : model.encoder) z = layer->infer(z);
  VQResult vq = vector_quantize(z, model.codebook_view(), model.vq_beta);
  Tensor y = std::move(vq.quantized);
  for (const auto& layer : model.decoder) y = layer->infer(y);
  const double recon = mse_loss(y, x, nullptr);
  return (recon + vq.codebook_loss) + vq.commitment_loss;
}

std::vector<double> per_image_losses(const AutoencoderModel& model,
                                     const std::vector<FloatImage>& images) {
  std::vector<double> losses(images.size(), 0.0);
  const int budget =
      std::min<int>(thread_budget(), static_cast<int>(std::max<size_t>(images.size(), 1)));
  if (budget <= 1 || images.size() < 2) {
    for (size_t i = 0; i < images.size(); ++i) losses[i] = eval_loss(model, images[i]);
    return losses;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(budget);
  workers.reserve(budget);
  for (int t = 0; t < budget; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (size_t i = static_cast<size_t>(t); i < images.size(); i += budget) {
          losses[i] = eval_loss(model, images[i]);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return losses;
}

TrainLog train(AutoencoderModel& model, const std::vector<FloatImage>& dataset,
               const TrainConfig& config) {
  validate_config(config);
  if (dataset.empty()) throw ShapeError("train: empty dataset");
  if (model.kind != config.kind || model.level != config.level) {
    throw ConfigError("train: model selection does not match config");
  }
  for (const auto& img : dataset) {
    if (img.width != model.input_size || img.height != model.input_size) {
      throw ConfigError("train: image size does not match model input");
    }
  }

  std::vector<FloatImage> train_set, val_set;
  if (dataset.size() == 1) {
    train_set = dataset;
  } else {
    std::tie(train_set, val_set) = split_dataset(dataset, config.split_fraction, config.seed);
  }

  TrainLog log;
  log.config = config;
  log.seed = config.seed;
  log.train_count = static_cast<int>(train_set.size());
  log.val_count = static_cast<int>(val_set.size());

  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  const std::vector<Parameter*> params = model.parameters();
  const size_t tn = train_set.size();
  std::vector<size_t> order(tn);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(config.seed + static_cast<uint64_t>(epoch));
    for (size_t i = tn - 1; i > 0; --i) {
      const uint64_t j = shuffle_rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }

    double weighted = 0.0;
    int step_index = 0;
    for (size_t begin = 0; begin < tn; begin += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(tn, begin + static_cast<size_t>(config.batch_size));
      std::vector<const FloatImage*> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
      const Tensor x = stack_batch(batch);

      StepRecord rec;
      rec.epoch = epoch + 1;
      rec.step = ++step_index;
      Tensor grad;
      if (model.kind == ModelKind::Dcnn) {
        const Tensor pred = model.forward_train(x, nullptr);
        rec.recon = bce_loss(pred, x, &grad);
        rec.total = rec.recon;
        model.backward_train(grad, nullptr);
      } else {
        VqForwardState state;
        const Tensor pred = model.forward_train(x, &state);
        rec.recon = mse_loss(pred, x, &grad);
        rec.codebook = state.vq.codebook_loss;
        rec.commitment = state.vq.commitment_loss;
        rec.total = (rec.recon + rec.codebook) + rec.commitment;
        model.backward_train(grad, &state);
      }
      adam_step(params, adam);
      weighted += rec.total * static_cast<double>(end - begin);
      log.steps.push_back(rec);
    }

    EpochRecord er;
    er.epoch = epoch + 1;
    er.train_loss = weighted / static_cast<double>(tn);
    if (val_set.empty()) {
      er.val_loss = std::numeric_limits<double>::quiet_NaN();
    } else {
      const std::vector<double> vals = per_image_losses(model, val_set);
      double acc = 0.0;
      for (double v : vals) acc += v;
      er.val_loss = acc / static_cast<double>(vals.size());
    }
    er.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(er);
  }
  return log;
}

void export_loss_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,val_loss,seconds\n";
  char buf[96];
  for (const auto& er : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", er.epoch, er.train_loss,
                  er.val_loss, er.seconds);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

int thread_budget() {
  if (const char* env = std::getenv("CTZIP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError("CTZIP_THREADS must be a positive integer");
    }
    return static_cast<int>(std::min<long>(v, 256));
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

}  // namespace ctzip
