// Command-line front end: architecture summary, training, evaluation,
// single-image prediction and augmentation preview.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cxrnet/cxrnet.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitWeights = 4;

struct RunConfig {
  std::string data_dir;
  std::string out_dir = ".";
  cxrnet::TrainConfig train;
  cxrnet::AugmentConfig aug;
  double split = 0.8;
  std::string precision = "f32";

  void validate() const {
    train.validate();
    aug.validate();
    if (!(split > 0.0 && split < 1.0)) throw cxrnet::ConfigError("split must be in (0, 1)");
    if (precision != "f32" && precision != "f64") {
      throw cxrnet::ConfigError("precision must be f32 or f64, got '" + precision + "'");
    }
  }
};

json to_json(const RunConfig& cfg) {
  return json{{"data", cfg.data_dir},
              {"out", cfg.out_dir},
              {"epochs", cfg.train.epochs},
              {"batch_size", cfg.train.batch_size},
              {"learning_rate", cfg.train.learning_rate},
              {"rho", cfg.train.rho},
              {"epsilon", cfg.train.epsilon},
              {"seed", cfg.train.seed},
              {"threshold", cfg.train.threshold},
              {"split", cfg.split},
              {"precision", cfg.precision},
              {"augment",
               {{"rotation_degrees", cfg.aug.rotation_degrees},
                {"zoom_fraction", cfg.aug.zoom_fraction},
                {"width_shift_fraction", cfg.aug.width_shift_fraction},
                {"height_shift_fraction", cfg.aug.height_shift_fraction},
                {"horizontal_flip", cfg.aug.horizontal_flip},
                {"crop_top_fraction", cfg.aug.crop_top_fraction},
                {"target_width", cfg.aug.target_width},
                {"target_height", cfg.aug.target_height}}}};
}

template <typename T>
void assign_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw cxrnet::ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

void apply_config_json(const json& j, RunConfig& cfg) {
  static const std::vector<std::string> known = {"data",  "out",       "epochs",    "batch_size",
                                                 "learning_rate", "rho", "epsilon", "seed",
                                                 "threshold", "split", "precision", "augment"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw cxrnet::ConfigError("unknown config field '" + key + "'");
    }
  }
  assign_if_present(j, "data", cfg.data_dir);
  assign_if_present(j, "out", cfg.out_dir);
  assign_if_present(j, "epochs", cfg.train.epochs);
  assign_if_present(j, "batch_size", cfg.train.batch_size);
  assign_if_present(j, "learning_rate", cfg.train.learning_rate);
  assign_if_present(j, "rho", cfg.train.rho);
  assign_if_present(j, "epsilon", cfg.train.epsilon);
  assign_if_present(j, "seed", cfg.train.seed);
  assign_if_present(j, "threshold", cfg.train.threshold);
  assign_if_present(j, "split", cfg.split);
  assign_if_present(j, "precision", cfg.precision);
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    static const std::vector<std::string> known_aug = {
        "rotation_degrees", "zoom_fraction",     "width_shift_fraction", "height_shift_fraction",
        "horizontal_flip",  "crop_top_fraction", "target_width",         "target_height"};
    for (const auto& [key, value] : a.items()) {
      (void)value;
      if (std::find(known_aug.begin(), known_aug.end(), key) == known_aug.end()) {
        throw cxrnet::ConfigError("unknown augment config field '" + key + "'");
      }
    }
    assign_if_present(a, "rotation_degrees", cfg.aug.rotation_degrees);
    assign_if_present(a, "zoom_fraction", cfg.aug.zoom_fraction);
    assign_if_present(a, "width_shift_fraction", cfg.aug.width_shift_fraction);
    assign_if_present(a, "height_shift_fraction", cfg.aug.height_shift_fraction);
    assign_if_present(a, "horizontal_flip", cfg.aug.horizontal_flip);
    assign_if_present(a, "crop_top_fraction", cfg.aug.crop_top_fraction);
    assign_if_present(a, "target_width", cfg.aug.target_width);
    assign_if_present(a, "target_height", cfg.aug.target_height);
  }
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw cxrnet::ConfigError("cannot open config file " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw cxrnet::ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  apply_config_json(j, cfg);
}

void atomic_write_text(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << content;
    if (!os) throw cxrnet::DataError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json metrics_json(const cxrnet::EvalResult& res) {
  json j = json::parse(cxrnet::report_render(cxrnet::compute_metrics(res.cm), cxrnet::ReportFormat::json));
  j["loss"] = res.loss;
  return j;
}

template <typename T>
int run_train(const RunConfig& cfg) {
  cxrnet::Dataset all = cxrnet::load_dataset(cfg.data_dir);
  for (const auto& w : all.warnings) std::cerr << "warning: " << w << "\n";
  auto [train_set, val_set] = cxrnet::split(all, cfg.split, cfg.train.seed);
  std::cerr << "dataset: " << all.size() << " images (" << all.count(cxrnet::Label::normal) << " normal, "
            << all.count(cxrnet::Label::covid) << " covid), " << train_set.size() << " train / "
            << val_set.size() << " val\n";

  cxrnet::Model<T> model = cxrnet::build_proposed_model<T>(cfg.train.seed);
  const auto records = cxrnet::train(model, train_set, val_set, cfg.train, cfg.aug, &std::cerr);

  fs::create_directories(cfg.out_dir);
  atomic_write_text(fs::path(cfg.out_dir) / "history.csv", cxrnet::history_csv(records));

  const fs::path weights_path = fs::path(cfg.out_dir) / "weights.cxrw";
  const fs::path weights_tmp = fs::path(cfg.out_dir) / "weights.cxrw.tmp";
  model.save_weights(weights_tmp.string());
  fs::rename(weights_tmp, weights_path);

  const cxrnet::EvalResult final_val =
      cxrnet::evaluate(model, val_set, cfg.aug, cfg.train.batch_size, cfg.train.threshold);
  atomic_write_text(fs::path(cfg.out_dir) / "metrics.json", metrics_json(final_val).dump(2) + "\n");
  atomic_write_text(fs::path(cfg.out_dir) / "config.resolved.json", to_json(cfg).dump(2) + "\n");

  std::cout << "final validation: loss=" << format_double(final_val.loss)
            << " accuracy=" << format_double(final_val.accuracy) << "\n";
  std::cout << "artifacts written to " << cfg.out_dir << "\n";
  return kExitOk;
}

template <typename T>
int run_eval(const RunConfig& cfg, const std::string& weights) {
  cxrnet::Model<T> model = cxrnet::load_model<T>(weights);
  cxrnet::Dataset ds = cxrnet::load_dataset(cfg.data_dir);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  const cxrnet::EvalResult res =
      cxrnet::evaluate(model, ds, cfg.aug, cfg.train.batch_size, cfg.train.threshold);
  std::cout << cxrnet::report_render(cxrnet::compute_metrics(res.cm), cxrnet::ReportFormat::text);
  std::cout << "loss=" << format_double(res.loss) << " accuracy=" << format_double(res.accuracy) << "\n";
  fs::create_directories(cfg.out_dir);
  atomic_write_text(fs::path(cfg.out_dir) / "metrics.json", metrics_json(res).dump(2) + "\n");
  return kExitOk;
}

template <typename T>
int run_predict(const RunConfig& cfg, const std::string& weights, const std::string& image_path) {
  cxrnet::Model<T> model = cxrnet::load_model<T>(weights);
  const cxrnet::GrayImage img = cxrnet::load_image(image_path);
  const cxrnet::Tensor<T> x = cxrnet::preprocess<T>(img, cfg.aug);
  const cxrnet::Tensor<T> probs = model.forward(cxrnet::stack_batch<T>({x}), cxrnet::Mode::eval);
  const double p = static_cast<double>(probs(0, 0));
  const cxrnet::Label label = p >= cfg.train.threshold ? cxrnet::Label::covid : cxrnet::Label::normal;
  std::cout << "label=" << cxrnet::label_name(label) << " p=" << format_double(p) << "\n";
  return kExitOk;
}

int run_augment_preview(const RunConfig& cfg, const std::string& image_path, int count) {
  const cxrnet::GrayImage img = cxrnet::load_image(image_path);
  fs::create_directories(cfg.out_dir);
  json sidecar = json::array();
  for (int i = 0; i < count; ++i) {
    cxrnet::Rng rng = cxrnet::Rng::derive(cfg.train.seed, 0xa46u, static_cast<std::uint64_t>(i));
    const cxrnet::AugmentParams params = cxrnet::sample_augment_params(cfg.aug, img.width, img.height, rng);
    const cxrnet::GrayImage out = cxrnet::augment(img, params);
    char name[32];
    std::snprintf(name, sizeof(name), "aug_%03d.pgm", i);
    cxrnet::save_pgm(out, (fs::path(cfg.out_dir) / name).string());
    sidecar.push_back({{"file", name},
                       {"angle_degrees", params.angle_degrees},
                       {"zoom", params.zoom},
                       {"dx", params.dx},
                       {"dy", params.dy},
                       {"flip", params.flip}});
  }
  atomic_write_text(fs::path(cfg.out_dir) / "augment_preview.json", sidecar.dump(2) + "\n");
  std::cout << "wrote " << count << " previews to " << cfg.out_dir << "\n";
  return kExitOk;
}

int run_summary() {
  const auto model = cxrnet::build_proposed_model<float>(0);
  std::cout << model.summary().str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binary chest X-ray classifier: training, evaluation and inference"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file, weights_file, image_file;
  int preview_count = 5;

  auto add_common = [&](CLI::App* cmd, bool with_train_flags) {
    cmd->add_option("--config", config_file, "JSON config file (flags override file values)");
    cmd->add_option("--threshold", cfg.train.threshold, "Decision threshold for the covid class");
    cmd->add_option("--out", cfg.out_dir, "Output directory");
    if (with_train_flags) {
      cmd->add_option("--epochs", cfg.train.epochs, "Training epochs");
      cmd->add_option("--batch-size", cfg.train.batch_size, "Mini-batch size");
      cmd->add_option("--lr", cfg.train.learning_rate, "Learning rate");
      cmd->add_option("--seed", cfg.train.seed, "Run seed");
      cmd->add_option("--split", cfg.split, "Train fraction of the stratified split");
      cmd->add_option("--precision", cfg.precision, "Compute precision: f32 or f64");
    }
  };

  CLI::App* summary = app.add_subcommand("summary", "Print the layer table");

  CLI::App* train = app.add_subcommand("train", "Train on a directory-per-class dataset");
  train->add_option("--data", cfg.data_dir, "Dataset root with normal/ and covid/ subdirectories");
  add_common(train, true);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate saved weights on a dataset");
  eval->add_option("--data", cfg.data_dir, "Dataset root with normal/ and covid/ subdirectories");
  eval->add_option("--weights", weights_file, "Weights file");
  eval->add_option("--batch-size", cfg.train.batch_size, "Mini-batch size");
  eval->add_option("--precision", cfg.precision, "Compute precision: f32 or f64");
  add_common(eval, false);

  CLI::App* predict = app.add_subcommand("predict", "Classify a single image");
  predict->add_option("--image", image_file, "Image file (PGM or PNG)");
  predict->add_option("--weights", weights_file, "Weights file");
  predict->add_option("--precision", cfg.precision, "Compute precision: f32 or f64");
  add_common(predict, false);

  CLI::App* preview = app.add_subcommand("augment-preview", "Write augmented copies of one image");
  preview->add_option("--image", image_file, "Image file (PGM or PNG)");
  preview->add_option("--seed", cfg.train.seed, "Sampling seed");
  preview->add_option("--count", preview_count, "Number of augmented outputs");
  add_common(preview, false);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? kExitOk : kExitConfig;
    }

    // Resolve precedence: defaults, then config file, then explicit flags.
    if (!config_file.empty()) {
      RunConfig merged;
      load_config_file(config_file, merged);
      CLI::App* active = app.get_subcommands().front();
      // A flag wins over the file only where the subcommand has it and the
      // user passed it.
      auto keep = [&](const std::string& flag) {
        const CLI::Option* opt = active->get_option_no_throw(flag);
        return opt != nullptr && opt->count() > 0;
      };
      if (!keep("--data") && !merged.data_dir.empty()) cfg.data_dir = merged.data_dir;
      if (!keep("--out")) cfg.out_dir = merged.out_dir;
      if (!keep("--epochs")) cfg.train.epochs = merged.train.epochs;
      if (!keep("--batch-size")) cfg.train.batch_size = merged.train.batch_size;
      if (!keep("--lr")) cfg.train.learning_rate = merged.train.learning_rate;
      cfg.train.rho = merged.train.rho;
      cfg.train.epsilon = merged.train.epsilon;
      if (!keep("--seed")) cfg.train.seed = merged.train.seed;
      if (!keep("--threshold")) cfg.train.threshold = merged.train.threshold;
      if (!keep("--split")) cfg.split = merged.split;
      if (!keep("--precision")) cfg.precision = merged.precision;
      cfg.aug = merged.aug;
    }
    cfg.validate();

    if (summary->parsed()) return run_summary();

    if (train->parsed()) {
      if (cfg.data_dir.empty()) throw cxrnet::ConfigError("train requires --data (or a config file value)");
      return cfg.precision == "f64" ? run_train<double>(cfg) : run_train<float>(cfg);
    }
    if (eval->parsed()) {
      if (cfg.data_dir.empty()) throw cxrnet::ConfigError("eval requires --data");
      if (weights_file.empty()) throw cxrnet::ConfigError("eval requires --weights");
      return cfg.precision == "f64" ? run_eval<double>(cfg, weights_file)
                                    : run_eval<float>(cfg, weights_file);
    }
    if (predict->parsed()) {
      if (image_file.empty()) throw cxrnet::ConfigError("predict requires --image");
      if (weights_file.empty()) throw cxrnet::ConfigError("predict requires --weights");
      return cfg.precision == "f64" ? run_predict<double>(cfg, weights_file, image_file)
                                    : run_predict<float>(cfg, weights_file, image_file);
    }
    if (preview->parsed()) {
      if (image_file.empty()) throw cxrnet::ConfigError("augment-preview requires --image");
      if (preview_count < 1) throw cxrnet::ConfigError("--count must be >= 1");
      return run_augment_preview(cfg, image_file, preview_count);
    }
    return kExitConfig;
  } catch (const cxrnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cxrnet::WeightsError& e) {
    std::cerr << "weights error: " << e.what() << "\n";
    return kExitWeights;
  } catch (const cxrnet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
