#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ctzip/codec.hpp"
#include "ctzip/image.hpp"
#include "ctzip/metrics.hpp"
#include "ctzip/model.hpp"
#include "ctzip/synth.hpp"
#include "ctzip/train.hpp"

namespace {

using namespace ctzip;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// key=value defaults applied to every option the command line left unset;
// explicit flags always win. Unknown keys are usage errors so that typos
// cannot silently change a run.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#') continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(entry.substr(0, eq));
    const std::string value = trim(entry.substr(eq + 1));
    if (key == "config") throw ConfigError(path + ": config files cannot nest");
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                        "' for command " + cmd->get_name());
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require_given(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

ModelKind parse_kind(const std::string& s) {
  if (s == "dcnn") return ModelKind::Dcnn;
  if (s == "vqvae") return ModelKind::Vqvae;
  throw ConfigError("--kind must be dcnn or vqvae, got '" + s + "'");
}

CompressionLevel parse_level(const std::string& s) {
  if (s == "l1") return CompressionLevel::L1;
  if (s == "l2") return CompressionLevel::L2;
  if (s == "l3") return CompressionLevel::L3;
  throw ConfigError("--level must be l1, l2 or l3, got '" + s + "'");
}

std::vector<FloatImage> load_dataset(const std::string& dir) {
  std::vector<std::string> paths;
  std::error_code ec;
  for (std::filesystem::directory_iterator it(dir, ec), end; !ec && it != end;
       it.increment(ec)) {
    if (it->path().extension() == ".pgm") paths.push_back(it->path().string());
  }
  if (ec) throw IoError("cannot list dataset directory " + dir + ": " + ec.message());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw DataError("no .pgm images found in " + dir);
  std::vector<FloatImage> images;
  images.reserve(paths.size());
  for (const std::string& p : paths) {
    const GrayImage g = load_pgm(p);
    if (g.width != g.height) {
      throw ShapeError(p + ": training images must be square, got " +
                       std::to_string(g.width) + "x" + std::to_string(g.height));
    }
    images.push_back(normalize(g));
  }
  return images;
}

// one line per quantity so scripts can grep key=value pairs
void emit(const char* key, const std::string& value) {
  std::cout << key << "=" << value << "\n";
}

void emit(const char* key, double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  emit(key, std::string(buf));
}

// ---- csv parsing for `report` ----------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double_field(const std::string& s, const std::string& file) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw FormatError(file + ": malformed numeric field '" + s + "'");
  }
  return v;
}

struct RowSummary {
  std::string label;
  int images = 0;
  double max = 0.0;
  double mean_mse = 0.0;
  double mean_msle = 0.0;
};

RowSummary summarize_metrics_csv(const std::string& label, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "image_id_a,image_id_b,max,mse,psnr_db,msle") {
    throw FormatError(path + ": not a metrics csv (bad header)");
  }
  RowSummary sum;
  sum.label = label;
  double mse_acc = 0.0, msle_acc = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) throw FormatError(path + ": expected 6 columns, got a different count");
    const double max = parse_double_field(f[2], path);
    if (sum.images == 0) {
      sum.max = max;
    } else if (max != sum.max) {
      throw DataError(path + ": rows mix max conventions (" + f[2] + " vs earlier)");
    }
    mse_acc += parse_double_field(f[3], path);
    msle_acc += parse_double_field(f[5], path);
    ++sum.images;
  }
  if (sum.images == 0) throw DataError(path + ": no metric rows to aggregate");
  sum.mean_mse = mse_acc / sum.images;
  sum.mean_msle = msle_acc / sum.images;
  return sum;
}

// ---- commands ---------------------------------------------------------------

struct SynthArgs {
  std::string output;
  int count = 256;
  int size = 64;
  double porosity = 19.16;
  int correlation = 8;
  double noise = 0.0;
  uint64_t seed = 7;
};

void run_synth(const SynthArgs& a) {
  require_given(a.output, "--output");
  PorousSpec spec;
  spec.width = a.size;
  spec.height = a.size;
  spec.target_porosity = a.porosity;
  spec.correlation_length = a.correlation;
  spec.noise_sigma = a.noise;
  spec.seed = a.seed;
  const std::vector<std::string> paths = write_porous_dataset(a.output, a.count, spec);
  emit("images", static_cast<double>(paths.size()));
  emit("dir", a.output);
}

struct TrainArgs {
  std::string input;
  std::string checkpoint;
  std::string losses;
  std::string kind = "dcnn";
  std::string level = "l1";
  int codebook = 0;
  int epochs = 100;
  int batch = 128;
  double lr = 1e-3;
  uint64_t seed = 1;
  double split = 0.8;
  int base = 16;
};

void run_train(const TrainArgs& a) {
  require_given(a.input, "--input");
  require_given(a.checkpoint, "--checkpoint");
  TrainConfig cfg;
  cfg.kind = parse_kind(a.kind);
  cfg.level = parse_level(a.level);
  cfg.codebook_size = a.codebook;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.split_fraction = a.split;
  cfg.base_width = a.base;

  const std::vector<FloatImage> dataset = load_dataset(a.input);
  AutoencoderModel model = build_model(cfg, dataset[0].width);
  const TrainLog log = train(model, dataset, cfg);
  save_checkpoint(model, a.checkpoint);
  const std::string losses = a.losses.empty() ? a.checkpoint + ".losses.csv" : a.losses;
  export_loss_csv(log, losses);

  emit("train_images", static_cast<double>(log.train_count));
  emit("val_images", static_cast<double>(log.val_count));
  emit("final_train_loss", log.epochs.back().train_loss);
  emit("final_val_loss", log.epochs.back().val_loss);
  emit("checkpoint", a.checkpoint);
  emit("losses", losses);
}

struct CompressArgs {
  std::string input;
  std::string checkpoint;
  std::string output;
};

void run_compress(const CompressArgs& a) {
  require_given(a.input, "--input");
  require_given(a.checkpoint, "--checkpoint");
  require_given(a.output, "--output");
  const AutoencoderModel model = load_checkpoint(a.checkpoint);
  const GrayImage original = load_pgm(a.input);
  const LatentArtifact artifact = compress_image(model, normalize(original));
  save_artifact(artifact, a.output);
  emit("output", a.output);
  emit("payload_bytes", static_cast<double>(artifact.payload.size()));
  emit("total_bytes", static_cast<double>(artifact.total_bytes()));
  emit("ratio", compression_ratio(original, artifact));
}

struct DecompressArgs {
  std::string input;
  std::string checkpoint;
  std::string output;
};

void run_decompress(const DecompressArgs& a) {
  require_given(a.input, "--input");
  require_given(a.checkpoint, "--checkpoint");
  require_given(a.output, "--output");
  const AutoencoderModel model = load_checkpoint(a.checkpoint);
  const LatentArtifact artifact = load_artifact(a.input);
  save_pgm(denormalize(decompress_artifact(model, artifact)), a.output);
  emit("output", a.output);
}

struct EvalArgs {
  std::string a;
  std::string b;
  int max = 255;
  std::string output;
  std::string lapmap;
};

void run_eval(const EvalArgs& a) {
  require_given(a.a, "--a");
  require_given(a.b, "--b");
  if (a.max != 1 && a.max != 255) throw ConfigError("--max must be 1 or 255");
  const FloatImage fa = normalize(load_pgm(a.a));
  const FloatImage fb = normalize(load_pgm(a.b));
  const MetricsReport report =
      evaluate_pair(fa, fb, static_cast<double>(a.max), a.a, a.b);
  if (a.output.empty()) {
    std::cout << metrics_csv_string({report});
  } else {
    write_metrics_csv({report}, a.output);
  }
  if (!a.lapmap.empty()) save_laplacian_pgm(laplacian_diff_map(fa, fb), a.lapmap);
}

struct BinarizeArgs {
  std::string input;
  std::string output;
  int threshold = -1;  // -1 selects the histogram threshold automatically
  int spatial = 2;
  int range = 20;
  int iters = 10;
  bool pores_bright = false;
};

void run_binarize(const BinarizeArgs& a) {
  require_given(a.input, "--input");
  require_given(a.output, "--output");
  if (a.threshold < -1 || a.threshold > 255) throw ConfigError("--threshold must be 0..255");
  const GrayImage raw = load_pgm(a.input);
  const GrayImage filtered = mean_shift_filter(raw, a.spatial, a.range, a.iters);
  const uint8_t t = a.threshold < 0 ? otsu_threshold(filtered)
                                    : static_cast<uint8_t>(a.threshold);
  const BinaryImage bin = binarize(filtered, t, !a.pores_bright);
  save_binary_pgm(bin, a.output);
  emit("threshold", static_cast<double>(t));
  emit("porosity", porosity(bin));
  emit("output", a.output);
}

struct OtsuArgs {
  std::string input;
};

void run_otsu(const OtsuArgs& a) {
  require_given(a.input, "--input");
  const GrayImage img = load_pgm(a.input);
  const uint8_t t = otsu_threshold(img);
  size_t below = 0;
  for (uint8_t v : img.data) below += v <= t;
  emit("threshold", static_cast<double>(t));
  emit("pixels_at_or_below", static_cast<double>(below));
  emit("pixels_above", static_cast<double>(img.pixel_count() - below));
  emit("porosity", porosity(binarize(img, t)));
}

struct ReportArgs {
  std::vector<std::string> rows;
  std::string output;
};

void run_report(const ReportArgs& a) {
  if (a.rows.empty()) throw ConfigError("--row LABEL=METRICS_CSV is required");
  std::string text = "label,images,max,mse,psnr_db,msle\n";
  char buf[40];
  for (const std::string& row : a.rows) {
    const auto eq = row.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == row.size()) {
      throw ConfigError("--row expects LABEL=METRICS_CSV, got '" + row + "'");
    }
    const RowSummary sum = summarize_metrics_csv(row.substr(0, eq), row.substr(eq + 1));
    text += sum.label + "," + std::to_string(sum.images);
    std::snprintf(buf, sizeof(buf), ",%.17g", sum.max);
    text += buf;
    std::snprintf(buf, sizeof(buf), ",%.17g", sum.mean_mse);
    text += buf;
    text += "," + psnr(sum.mean_mse, sum.max).str();
    std::snprintf(buf, sizeof(buf), ",%.17g", sum.mean_msle);
    text += buf;
    text += "\n";
  }
  if (a.output.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.output);
    out << text;
    if (!out) throw IoError("write failed: " + a.output);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"autoencoder compression pipeline for grayscale slice images"};
  app.require_subcommand(1);

  std::string config_path;
  SynthArgs synth_args;
  TrainArgs train_args;
  CompressArgs compress_args;
  DecompressArgs decompress_args;
  EvalArgs eval_args;
  BinarizeArgs binarize_args;
  OtsuArgs otsu_args;
  ReportArgs report_args;

  auto add_config = [&config_path](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "key=value defaults; explicit flags override the file");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic porous dataset");
  synth->add_option("--output", synth_args.output, "dataset directory");
  synth->add_option("--count", synth_args.count, "number of images");
  synth->add_option("--size", synth_args.size, "image width and height");
  synth->add_option("--porosity", synth_args.porosity, "target porosity percentage");
  synth->add_option("--correlation", synth_args.correlation, "pore correlation length");
  synth->add_option("--noise", synth_args.noise, "grayscale noise sigma");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  add_config(synth);

  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
  train_cmd->add_option("--input", train_args.input, "dataset directory of .pgm files");
  train_cmd->add_option("--checkpoint", train_args.checkpoint, "checkpoint output path");
  train_cmd->add_option("--losses", train_args.losses,
                        "loss csv path (default: <checkpoint>.losses.csv)");
  train_cmd->add_option("--kind", train_args.kind, "dcnn or vqvae");
  train_cmd->add_option("--level", train_args.level, "l1, l2 or l3");
  train_cmd->add_option("--codebook", train_args.codebook, "codebook size (0 = level default)");
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
  train_cmd->add_option("--batch", train_args.batch, "batch size");
  train_cmd->add_option("--lr", train_args.lr, "learning rate");
  train_cmd->add_option("--seed", train_args.seed, "training seed");
  train_cmd->add_option("--split", train_args.split, "training fraction of the dataset");
  train_cmd->add_option("--base", train_args.base, "base channel width");
  add_config(train_cmd);

  CLI::App* compress = app.add_subcommand("compress", "compress a pgm into a .ctl artifact");
  compress->add_option("--input", compress_args.input, "source pgm");
  compress->add_option("--checkpoint", compress_args.checkpoint, "trained checkpoint");
  compress->add_option("--output", compress_args.output, "artifact output path");
  add_config(compress);

  CLI::App* decompress =
      app.add_subcommand("decompress", "decode a .ctl artifact back to a pgm");
  decompress->add_option("--input", decompress_args.input, "artifact path");
  decompress->add_option("--checkpoint", decompress_args.checkpoint, "trained checkpoint");
  decompress->add_option("--output", decompress_args.output, "decoded pgm path");
  add_config(decompress);

  CLI::App* eval_cmd = app.add_subcommand("eval", "quality metrics for an image pair");
  eval_cmd->add_option("--a", eval_args.a, "reference pgm");
  eval_cmd->add_option("--b", eval_args.b, "comparison pgm");
  eval_cmd->add_option("--max", eval_args.max, "intensity convention: 1 or 255");
  eval_cmd->add_option("--output", eval_args.output, "metrics csv path (default: stdout)");
  eval_cmd->add_option("--lapmap", eval_args.lapmap, "edge-difference map pgm path");
  add_config(eval_cmd);

  CLI::App* binarize_cmd =
      app.add_subcommand("binarize", "mean-shift filter and threshold to a two-phase pgm");
  binarize_cmd->add_option("--input", binarize_args.input, "source pgm");
  binarize_cmd->add_option("--output", binarize_args.output, "binary pgm path");
  binarize_cmd->add_option("--threshold", binarize_args.threshold,
                           "fixed threshold 0..255 (default: automatic)");
  binarize_cmd->add_option("--spatial", binarize_args.spatial, "filter spatial radius");
  binarize_cmd->add_option("--range", binarize_args.range, "filter intensity radius");
  binarize_cmd->add_option("--iters", binarize_args.iters, "filter iteration cap");
  binarize_cmd->add_flag("--pores-bright", binarize_args.pores_bright,
                         "mark the brighter phase as pore");
  add_config(binarize_cmd);

  CLI::App* otsu_cmd = app.add_subcommand("otsu", "report the histogram threshold");
  otsu_cmd->add_option("--input", otsu_args.input, "source pgm");
  add_config(otsu_cmd);

  CLI::App* report = app.add_subcommand("report", "aggregate metrics csvs into a summary");
  report->add_option("--row", report_args.rows, "LABEL=METRICS_CSV (repeatable)");
  report->add_option("--output", report_args.output, "summary csv path (default: stdout)");
  add_config(report);

  try {
    app.parse(argc, argv);
    CLI::App* cmd = app.get_subcommands().front();
    if (!config_path.empty()) apply_config_file(cmd, config_path);
    if (cmd == synth) run_synth(synth_args);
    if (cmd == train_cmd) run_train(train_args);
    if (cmd == compress) run_compress(compress_args);
    if (cmd == decompress) run_decompress(decompress_args);
    if (cmd == eval_cmd) run_eval(eval_args);
    if (cmd == binarize_cmd) run_binarize(binarize_args);
    if (cmd == otsu_cmd) run_otsu(otsu_args);
    if (cmd == report) run_report(report_args);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
