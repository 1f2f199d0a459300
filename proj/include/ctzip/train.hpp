#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctzip/image.hpp"
#include "ctzip/model.hpp"

namespace ctzip {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double lr = 1e-3;
  uint64_t seed = 1;
  double split_fraction = 0.8;
  ModelKind kind = ModelKind::Dcnn;
  CompressionLevel level = CompressionLevel::L1;
  int codebook_size = 0;  // 0 -> level default; VQ only
  int base_width = 16;
};

struct StepRecord {
  int epoch = 0;  // 1-based
  int step = 0;   // 1-based within its epoch
  double total = 0.0;
  double recon = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
  double seconds = 0.0;
};

struct TrainLog {
  TrainConfig config;
  uint64_t seed = 0;
  int train_count = 0;
  int val_count = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

// Seeded Fisher-Yates shuffle then prefix split; the training part gets
// floor(n * fraction) images, clamped so both parts stay non-empty.
std::pair<std::vector<FloatImage>, std::vector<FloatImage>> split_dataset(
    const std::vector<FloatImage>& images, double fraction, uint64_t seed);

AutoencoderModel build_model(const TrainConfig& config, int input_size);

// Mini-batch autoencoder training: per-epoch reshuffle seeded from
// seed + epoch index, last partial batch kept, Adam updates, epoch-end
// validation with no parameter writes. A one-image dataset trains without
// a validation split and logs NaN validation loss.
TrainLog train(AutoencoderModel& model, const std::vector<FloatImage>& dataset,
               const TrainConfig& config);

// Training objective of one image under the current parameters (no
// clamping, no updates): BCE for the pooling model, reconstruction MSE +
// codebook + commitment for the quantizing model.
double eval_loss(const AutoencoderModel& model, const FloatImage& image);

// Per-image eval_loss over a dataset, reduced in image order regardless of
// the thread count.
std::vector<double> per_image_losses(const AutoencoderModel& model,
                                     const std::vector<FloatImage>& images);

void export_loss_csv(const TrainLog& log, const std::string& path);

// CTZIP_THREADS when set (positive integer), else hardware concurrency.
int thread_budget();

}  // namespace ctzip
