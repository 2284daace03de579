// End-to-end tests of the command-line tool: exit codes, artifact files,
// flag/config precedence and reproducibility.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cxrnet/cxrnet.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace cxrnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() / ("cxrnet_cli_out_" + std::to_string(counter++) + ".log");
  const std::string cmd = std::string(CXRNET_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult res;
  res.exit_code = WEXITSTATUS(raw);
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  res.output = ss.str();
  fs::remove(log);
  return res;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cxrnet_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path small_corpus(const std::string& name, int per_class = 4) {
  const fs::path root = scratch_dir(name);
  SyntheticOptions opt;
  opt.per_class = per_class;
  write_synthetic_corpus(root.string(), opt);
  return root;
}

fs::path trained_stub_weights(const std::string& name) {
  auto model = build_proposed_model<float>(5);
  Rng rng(44);
  Tensor<float> warm = testutil::random_tensor_t<float>(Shape{2, 150, 150, 1}, rng, 0.0, 1.0);
  model.forward(warm, Mode::train);
  const fs::path path = scratch_dir(name) / "weights.cxrw";
  model.save_weights(path.string());
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, SummaryMatchesTheLayerTable) {
  const RunResult res = run_cli("summary");
  EXPECT_EQ(res.exit_code, 0);
  EXPECT_NE(res.output.find("(None, 10, 10, 256)"), std::string::npos);
  EXPECT_NE(res.output.find("295168"), std::string::npos);
  EXPECT_NE(res.output.find("Total params: 1246401"), std::string::npos);
}

TEST(Cli, TrainWritesArtifactsAndFlagsBeatConfig) {
  const fs::path corpus = small_corpus("train_corpus");
  const fs::path out = scratch_dir("train_out");
  const fs::path cfg_path = scratch_dir("train_cfg") / "cfg.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"epochs": 2, "seed": 9, "batch_size": 8})";
  }

  const RunResult res = run_cli("train --data " + corpus.string() + " --config " + cfg_path.string() +
                                " --epochs 1 --split 0.5 --out " + out.string());
  ASSERT_EQ(res.exit_code, 0) << res.output;

  EXPECT_TRUE(fs::exists(out / "weights.cxrw"));
  EXPECT_TRUE(fs::exists(out / "history.csv"));
  EXPECT_TRUE(fs::exists(out / "metrics.json"));
  EXPECT_TRUE(fs::exists(out / "config.resolved.json"));

  // Precedence matrix: flag (epochs 1) beats config file (epochs 2); file
  // values (seed 9, batch_size 8) beat defaults; untouched fields keep
  // their defaults.
  const json resolved = json::parse(slurp(out / "config.resolved.json"));
  EXPECT_EQ(resolved.at("epochs").get<int>(), 1);
  EXPECT_EQ(resolved.at("seed").get<std::uint64_t>(), 9u);
  EXPECT_EQ(resolved.at("batch_size").get<int>(), 8);
  EXPECT_EQ(resolved.at("split").get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(resolved.at("learning_rate").get<double>(), 1e-3);
  EXPECT_DOUBLE_EQ(resolved.at("rho").get<double>(), 0.9);
  EXPECT_DOUBLE_EQ(resolved.at("threshold").get<double>(), 0.5);
  EXPECT_EQ(resolved.at("precision").get<std::string>(), "f32");
  EXPECT_DOUBLE_EQ(resolved.at("augment").at("rotation_degrees").get<double>(), 30.0);
  EXPECT_DOUBLE_EQ(resolved.at("augment").at("crop_top_fraction").get<double>(), 0.08);

  std::istringstream history(slurp(out / "history.csv"));
  std::string line;
  std::getline(history, line);
  EXPECT_EQ(line, "epoch,train_loss,train_acc,val_loss,val_acc");
  int rows = 0;
  while (std::getline(history, line) && !line.empty()) ++rows;
  EXPECT_EQ(rows, 1);

  const json metrics = json::parse(slurp(out / "metrics.json"));
  for (const char* key : {"sensitivity", "specificity", "precision", "npv", "fpr", "fdr", "fnr",
                          "accuracy", "f1", "mcc", "loss"}) {
    EXPECT_TRUE(metrics.contains(key)) << key;
  }
}

TEST(Cli, ResolvedConfigReplaysBitIdentically) {
  const fs::path corpus = small_corpus("replay_corpus");
  const fs::path out1 = scratch_dir("replay_out1");
  const fs::path out2 = scratch_dir("replay_out2");

  const std::string common = "train --data " + corpus.string() + " --split 0.5 --epochs 2 --seed 3 "
                             "--batch-size 4 --precision f64 --out ";
  ASSERT_EQ(run_cli(common + out1.string()).exit_code, 0);

  const RunResult replay = run_cli("train --config " + (out1 / "config.resolved.json").string() +
                                   " --out " + out2.string());
  ASSERT_EQ(replay.exit_code, 0) << replay.output;

  EXPECT_EQ(slurp(out1 / "history.csv"), slurp(out2 / "history.csv"));
  EXPECT_EQ(slurp(out1 / "weights.cxrw"), slurp(out2 / "weights.cxrw"));
}

TEST(Cli, MissingClassDirectoryExitsThree) {
  const fs::path root = scratch_dir("no_covid");
  fs::create_directories(root / "normal");
  save_pgm(synthetic_blob(8, 8, *std::make_unique<Rng>(1)), (root / "normal" / "a.pgm").string());
  const RunResult res = run_cli("train --data " + root.string());
  EXPECT_EQ(res.exit_code, 3);
  EXPECT_NE(res.output.find("covid"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path cfg_path = scratch_dir("bad_cfg") / "cfg.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"epochz": 2})";
  }
  EXPECT_EQ(run_cli("train --data /nonexistent --config " + cfg_path.string()).exit_code, 2);
  EXPECT_EQ(run_cli("train").exit_code, 2);  // no data directory given
  EXPECT_EQ(run_cli("predict --image x --weights y --threshold 1.5").exit_code, 2);
  EXPECT_EQ(run_cli("train --data x --precision f16").exit_code, 2);
  EXPECT_EQ(run_cli("no-such-command").exit_code, 2);
}

TEST(Cli, WeightsErrorsExitFour) {
  const fs::path dir = scratch_dir("bad_weights");
  const fs::path bogus = dir / "bogus.cxrw";
  {
    std::ofstream os(bogus, std::ios::binary);
    os << "not a weights file at all";
  }
  const fs::path corpus = small_corpus("weights_corpus", 2);
  EXPECT_EQ(run_cli("eval --data " + corpus.string() + " --weights " + bogus.string()).exit_code, 4);

  const fs::path img = corpus / "normal" / "normal_0000.pgm";
  EXPECT_EQ(run_cli("predict --image " + img.string() + " --weights " + bogus.string()).exit_code, 4);
  EXPECT_EQ(run_cli("predict --image " + img.string() + " --weights " + (dir / "missing.cxrw").string()).exit_code, 4);
}

TEST(Cli, PredictPrintsMachineReadableLine) {
  const fs::path weights = trained_stub_weights("predict_weights");
  const fs::path corpus = small_corpus("predict_corpus", 2);
  const fs::path img = corpus / "covid" / "covid_0000.pgm";

  const RunResult res = run_cli("predict --image " + img.string() + " --weights " + weights.string());
  ASSERT_EQ(res.exit_code, 0) << res.output;
  ASSERT_EQ(res.output.rfind("label=", 0), 0u) << res.output;

  std::istringstream is(res.output);
  std::string label_field, p_field;
  is >> label_field >> p_field;
  const std::string label = label_field.substr(6);
  EXPECT_TRUE(label == "covid" || label == "normal");
  ASSERT_EQ(p_field.rfind("p=", 0), 0u);
  const double p = std::stod(p_field.substr(2));
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
  EXPECT_EQ(label == "covid", p >= 0.5);

  // A threshold above p must flip the label to normal.
  if (p < 0.999) {
    const RunResult high = run_cli("predict --image " + img.string() + " --weights " + weights.string() +
                                   " --threshold 0.999");
    EXPECT_EQ(high.output.rfind("label=normal", 0), 0u) << high.output;
  }

  EXPECT_EQ(run_cli("predict --image /nonexistent.pgm --weights " + weights.string()).exit_code, 3);
}

TEST(Cli, AugmentPreviewWritesImagesAndSidecar) {
  const fs::path corpus = small_corpus("preview_corpus", 2);
  const fs::path img = corpus / "normal" / "normal_0000.pgm";
  const fs::path out1 = scratch_dir("preview_out1");
  const fs::path out2 = scratch_dir("preview_out2");

  const RunResult res =
      run_cli("augment-preview --image " + img.string() + " --seed 11 --count 5 --out " + out1.string());
  ASSERT_EQ(res.exit_code, 0) << res.output;
  for (int i = 0; i < 5; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "aug_%03d.pgm", i);
    EXPECT_TRUE(fs::exists(out1 / name)) << name;
  }
  const json sidecar = json::parse(slurp(out1 / "augment_preview.json"));
  ASSERT_EQ(sidecar.size(), 5u);
  for (const auto& entry : sidecar) {
    const double angle = entry.at("angle_degrees").get<double>();
    EXPECT_GE(angle, -30.0);
    EXPECT_LE(angle, 30.0);
    const double zoom = entry.at("zoom").get<double>();
    EXPECT_GE(zoom, 0.8);
    EXPECT_LE(zoom, 1.2);
    EXPECT_TRUE(entry.at("flip").is_boolean());
  }

  ASSERT_EQ(run_cli("augment-preview --image " + img.string() + " --seed 11 --count 5 --out " +
                    out2.string()).exit_code, 0);
  EXPECT_EQ(slurp(out1 / "aug_000.pgm"), slurp(out2 / "aug_000.pgm"));
  EXPECT_EQ(slurp(out1 / "augment_preview.json"), slurp(out2 / "augment_preview.json"));

  EXPECT_EQ(run_cli("augment-preview --image /nonexistent.pgm --out " + out1.string()).exit_code, 3);
}

TEST(Cli, NonTrainCommandsAcceptAConfigFile) {
  const fs::path weights = trained_stub_weights("cfg_eval_weights");
  const fs::path corpus = small_corpus("cfg_eval_corpus", 2);
  const fs::path cfg_path = scratch_dir("cfg_eval_cfg") / "cfg.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"batch_size": 2, "threshold": 0.4})";
  }
  const RunResult res = run_cli("eval --data " + corpus.string() + " --weights " + weights.string() +
                                " --config " + cfg_path.string() + " --out " +
                                scratch_dir("cfg_eval_out").string());
  EXPECT_EQ(res.exit_code, 0) << res.output;

  const fs::path img = corpus / "normal" / "normal_0000.pgm";
  const RunResult pres = run_cli("predict --image " + img.string() + " --weights " + weights.string() +
                                 " --config " + cfg_path.string());
  EXPECT_EQ(pres.exit_code, 0) << pres.output;
}

TEST(Cli, EvalPrintsTenMetricRows) {
  const fs::path weights = trained_stub_weights("eval_weights");
  const fs::path corpus = small_corpus("eval_corpus", 2);
  const fs::path out = scratch_dir("eval_out");
  const RunResult res =
      run_cli("eval --data " + corpus.string() + " --weights " + weights.string() + " --out " + out.string());
  ASSERT_EQ(res.exit_code, 0) << res.output;
  for (const char* row : {"Sensitivity", "Specificity", "Precision", "Negative Predictive Value",
                          "False Positive Rate", "False Discovery Rate", "False Negative Rate",
                          "Accuracy", "F1 Score", "Matthews Correlation Coefficient"}) {
    EXPECT_NE(res.output.find(row), std::string::npos) << row;
  }
  EXPECT_NE(res.output.find("loss="), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "metrics.json"));
}

TEST(Cli, FixtureToolWritesACorpus) {
  const fs::path out = scratch_dir("fixture_tool");
  const std::string cmd = std::string(CXRNET_FIXTURE_TOOL_PATH) + " --out " + out.string() +
                          " --per-class 2 --seed 4 > /dev/null 2>&1";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  const Dataset ds = load_dataset(out.string());
  EXPECT_EQ(ds.size(), 4u);
}
