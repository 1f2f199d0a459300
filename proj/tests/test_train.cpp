#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "ctzip/rng.hpp"
#include "ctzip/train.hpp"

using namespace ctzip;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ctzip_train_" + name)).string();
}

std::vector<FloatImage> random_images(int count, int size, uint64_t seed) {
  Rng rng(seed);
  std::vector<FloatImage> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    FloatImage img(size, size);
    for (auto& p : img.data) p = rng.next_unit();
    out.push_back(std::move(img));
  }
  return out;
}

// tag each image by a unique first pixel so split contents are traceable
std::vector<FloatImage> tagged_images(int count, int size) {
  std::vector<FloatImage> out = random_images(count, size, 17);
  for (int i = 0; i < count; ++i) out[i].data[0] = static_cast<double>(i) / count;
  return out;
}

struct EnvGuard {
  std::string name;
  std::string saved;
  bool had = false;
  EnvGuard(const char* n, const char* v) : name(n) {
    if (const char* cur = std::getenv(n)) {
      had = true;
      saved = cur;
    }
    if (v) {
      setenv(n, v, 1);
    } else {
      unsetenv(n);
    }
  }
  ~EnvGuard() {
    if (had) {
      setenv(name.c_str(), saved.c_str(), 1);
    } else {
      unsetenv(name.c_str());
    }
  }
};

}  // namespace

TEST_CASE("split produces the documented sizes and partitions the dataset") {
  const auto ten = tagged_images(10, 4);
  const auto [tr, va] = split_dataset(ten, 0.8, 3);
  CHECK(tr.size() == 8);
  CHECK(va.size() == 2);

  std::multiset<double> tags;
  for (const auto& img : tr) tags.insert(img.data[0]);
  for (const auto& img : va) tags.insert(img.data[0]);
  std::multiset<double> expected;
  for (const auto& img : ten) expected.insert(img.data[0]);
  CHECK(tags == expected);

  const auto five = tagged_images(5, 4);
  const auto [tr5, va5] = split_dataset(five, 0.8, 3);
  CHECK(tr5.size() == 4);
  CHECK(va5.size() == 1);

  // clamping keeps both sides non-empty at extreme fractions
  const auto two = tagged_images(2, 4);
  CHECK(split_dataset(two, 0.05, 1).first.size() == 1);
  CHECK(split_dataset(two, 0.95, 1).second.size() == 1);

  CHECK_THROWS_AS(split_dataset(tagged_images(1, 4), 0.8, 1), ShapeError);
  CHECK_THROWS_AS(split_dataset(ten, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(ten, 1.0, 1), ConfigError);
}

TEST_CASE("split is deterministic per seed and shuffles across seeds") {
  const auto imgs = tagged_images(10, 4);
  const auto a = split_dataset(imgs, 0.8, 11);
  const auto b = split_dataset(imgs, 0.8, 11);
  REQUIRE(a.first.size() == b.first.size());
  for (size_t i = 0; i < a.first.size(); ++i) {
    CHECK(a.first[i].data == b.first[i].data);
  }
  const auto c = split_dataset(imgs, 0.8, 12);
  bool any_differ = false;
  for (size_t i = 0; i < a.first.size(); ++i) {
    any_differ = any_differ || a.first[i].data[0] != c.first[i].data[0];
  }
  CHECK(any_differ);
}

TEST_CASE("build_model dispatches on the configured kind") {
  TrainConfig cfg;
  cfg.base_width = 8;
  const AutoencoderModel dcnn = build_model(cfg, 16);
  CHECK(dcnn.kind == ModelKind::Dcnn);
  CHECK(dcnn.input_size == 16);
  CHECK(dcnn.codebook_k == 0);

  cfg.kind = ModelKind::Vqvae;
  cfg.level = CompressionLevel::L2;
  const AutoencoderModel vq = build_model(cfg, 32);
  CHECK(vq.kind == ModelKind::Vqvae);
  CHECK(vq.codebook_k == 256);  // level default when codebook_size is 0

  cfg.codebook_size = 32;
  CHECK(build_model(cfg, 32).codebook_k == 32);
}

TEST_CASE("a one-image dataset trains without a validation split") {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  cfg.base_width = 4;
  AutoencoderModel model = build_model(cfg, 8);
  const std::vector<FloatImage> one = random_images(1, 8, 5);

  const TrainLog log = train(model, one, cfg);
  CHECK(log.train_count == 1);
  CHECK(log.val_count == 0);
  REQUIRE(log.steps.size() == 1);
  CHECK(log.steps[0].epoch == 1);
  CHECK(log.steps[0].step == 1);
  REQUIRE(log.epochs.size() == 1);
  CHECK(std::isnan(log.epochs[0].val_loss));
  CHECK(log.epochs[0].train_loss == log.steps[0].total);
}

TEST_CASE("dcnn overfits an all-dark image") {
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 1;
  cfg.lr = 0.02;
  cfg.base_width = 8;
  AutoencoderModel model = build_model(cfg, 16);
  std::vector<FloatImage> one{FloatImage(16, 16, 0.0)};

  const TrainLog log = train(model, one, cfg);
  CHECK(log.steps.front().total > log.steps.back().total);
  CHECK(log.steps.back().total < 0.05);
  CHECK(eval_loss(model, one[0]) < 0.05);
}

TEST_CASE("vq step records satisfy the loss identities") {
  TrainConfig cfg;
  cfg.kind = ModelKind::Vqvae;
  cfg.epochs = 3;
  cfg.batch_size = 3;
  cfg.codebook_size = 8;
  cfg.base_width = 4;
  cfg.split_fraction = 0.8;
  AutoencoderModel model = build_model(cfg, 16);
  const std::vector<FloatImage> data = random_images(6, 16, 9);

  const TrainLog log = train(model, data, cfg);
  CHECK(log.train_count == 4);
  CHECK(log.val_count == 2);
  REQUIRE(log.steps.size() == 6);  // 2 per epoch: batches of 3 and 1
  for (int e = 0; e < 3; ++e) {
    CHECK(log.steps[2 * e].epoch == e + 1);
    CHECK(log.steps[2 * e].step == 1);
    CHECK(log.steps[2 * e + 1].step == 2);
  }
  for (const StepRecord& rec : log.steps) {
    CHECK(rec.total == (rec.recon + rec.codebook) + rec.commitment);
    CHECK(rec.recon >= 0.0);
    CHECK(rec.codebook >= 0.0);
    CHECK(rec.commitment == rec.codebook * 0.25);
  }
  REQUIRE(log.epochs.size() == 3);
  for (int e = 0; e < 3; ++e) {
    const double weighted =
        (log.steps[2 * e].total * 3.0 + log.steps[2 * e + 1].total * 1.0) / 4.0;
    CHECK(log.epochs[e].train_loss == weighted);
    CHECK(std::isfinite(log.epochs[e].val_loss));
    CHECK(log.epochs[e].seconds >= 0.0);
  }
}

TEST_CASE("validation never moves parameters and is thread-count invariant") {
  TrainConfig cfg;
  cfg.base_width = 4;
  AutoencoderModel model = build_model(cfg, 16);
  const std::vector<FloatImage> imgs = random_images(5, 16, 21);

  const uint64_t before = parameter_fingerprint(model);
  std::vector<double> serial, parallel;
  {
    EnvGuard guard("CTZIP_THREADS", "1");
    serial = per_image_losses(model, imgs);
  }
  {
    EnvGuard guard("CTZIP_THREADS", "3");
    parallel = per_image_losses(model, imgs);
  }
  CHECK(parameter_fingerprint(model) == before);
  CHECK(serial == parallel);
  for (size_t i = 0; i < imgs.size(); ++i) {
    CHECK(serial[i] == eval_loss(model, imgs[i]));
  }
}

TEST_CASE("training twice from the same seed is bit identical") {
  for (const ModelKind kind : {ModelKind::Dcnn, ModelKind::Vqvae}) {
    TrainConfig cfg;
    cfg.kind = kind;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.base_width = 4;
    cfg.codebook_size = 8;
    cfg.seed = 33;
    const std::vector<FloatImage> data = random_images(8, 16, 27);

    AutoencoderModel m1 = build_model(cfg, 16);
    AutoencoderModel m2 = build_model(cfg, 16);
    const TrainLog l1 = train(m1, data, cfg);
    const TrainLog l2 = train(m2, data, cfg);

    CHECK(parameter_fingerprint(m1) == parameter_fingerprint(m2));
    REQUIRE(l1.steps.size() == l2.steps.size());
    for (size_t i = 0; i < l1.steps.size(); ++i) {
      CHECK(l1.steps[i].total == l2.steps[i].total);
      CHECK(l1.steps[i].recon == l2.steps[i].recon);
    }
    REQUIRE(l1.epochs.size() == l2.epochs.size());
    for (size_t i = 0; i < l1.epochs.size(); ++i) {
      CHECK(l1.epochs[i].train_loss == l2.epochs[i].train_loss);
      CHECK(l1.epochs[i].val_loss == l2.epochs[i].val_loss);
    }
  }
}

TEST_CASE("loss csv round trips every numeric field") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.base_width = 4;
  AutoencoderModel model = build_model(cfg, 8);
  const TrainLog log = train(model, random_images(4, 8, 31), cfg);

  const std::string path = tmp_path("losses.csv");
  export_loss_csv(log, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_loss,val_loss,seconds");
  int rows = 0;
  while (std::getline(in, line)) {
    const char* p = line.c_str();
    char* end = nullptr;
    CHECK(std::strtol(p, &end, 10) == log.epochs[rows].epoch);
    CHECK(*end == ',');
    const double train_loss = std::strtod(end + 1, &end);
    CHECK(train_loss == log.epochs[rows].train_loss);
    CHECK(*end == ',');
    const double val_loss = std::strtod(end + 1, &end);
    CHECK(val_loss == log.epochs[rows].val_loss);
    CHECK(*end == ',');
    const double seconds = std::strtod(end + 1, &end);
    CHECK(seconds == log.epochs[rows].seconds);
    CHECK(*end == '\0');
    ++rows;
  }
  CHECK(rows == 2);
  std::filesystem::remove(path);

  // a one-image run logs nan validation loss and it survives the round trip
  TrainConfig one_cfg = cfg;
  one_cfg.epochs = 1;
  one_cfg.batch_size = 1;
  AutoencoderModel one_model = build_model(one_cfg, 8);
  const TrainLog one_log = train(one_model, random_images(1, 8, 37), one_cfg);
  export_loss_csv(one_log, path);
  std::ifstream in2(path);
  std::getline(in2, line);
  std::getline(in2, line);
  CHECK(line.find("nan") != std::string::npos);
  std::filesystem::remove(path);

  const TrainLog empty;
  export_loss_csv(empty, path);
  std::ifstream in3(path);
  std::string all((std::istreambuf_iterator<char>(in3)), std::istreambuf_iterator<char>());
  CHECK(all == "epoch,train_loss,val_loss,seconds\n");
  std::filesystem::remove(path);
}

TEST_CASE("train validates its inputs") {
  TrainConfig cfg;
  cfg.base_width = 4;
  AutoencoderModel model = build_model(cfg, 16);

  CHECK_THROWS_AS(train(model, {}, cfg), ShapeError);
  CHECK_THROWS_AS(train(model, random_images(2, 8, 1), cfg), ConfigError);  // wrong size

  TrainConfig mismatched = cfg;
  mismatched.kind = ModelKind::Vqvae;
  CHECK_THROWS_AS(train(model, random_images(2, 16, 1), mismatched), ConfigError);

  TrainConfig bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(model, random_images(2, 16, 1), bad), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(model, random_images(2, 16, 1), bad), ConfigError);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(train(model, random_images(2, 16, 1), bad), ConfigError);
  bad = cfg;
  bad.split_fraction = 1.0;
  CHECK_THROWS_AS(train(model, random_images(2, 16, 1), bad), ConfigError);

  CHECK_THROWS_AS(eval_loss(model, FloatImage(8, 8)), ShapeError);
}

TEST_CASE("thread budget honors the environment variable") {
  {
    EnvGuard guard("CTZIP_THREADS", "5");
    CHECK(thread_budget() == 5);
  }
  {
    EnvGuard guard("CTZIP_THREADS", "999");
    CHECK(thread_budget() == 256);  // documented cap
  }
  {
    EnvGuard guard("CTZIP_THREADS", "abc");
    CHECK_THROWS_AS(thread_budget(), ConfigError);
  }
  {
    EnvGuard guard("CTZIP_THREADS", "-2");
    CHECK_THROWS_AS(thread_budget(), ConfigError);
  }
  {
    EnvGuard guard("CTZIP_THREADS", "0");
    CHECK_THROWS_AS(thread_budget(), ConfigError);
  }
  {
    EnvGuard guard("CTZIP_THREADS", nullptr);
    CHECK(thread_budget() >= 1);
  }
}
