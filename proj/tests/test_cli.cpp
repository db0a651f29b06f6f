#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ppgglu/cli.hpp"

using namespace ppgglu;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ppgglu_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// every regular file in the tree, keyed by relative path
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), root).string()] = slurp(entry.path());
  return out;
}

std::size_t count_data_rows(const std::string& csv) {
  std::size_t rows = 0;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  return rows;
}

RunConfig tiny_config(const TempDir& dir) {
  RunConfig cfg;
  cfg.dataset_root = dir.path / "ds";
  cfg.out_dir = dir.path / "out";
  cfg.quiet = true;
  cfg.synth_fs_hz = 300.0;
  cfg.synth_duration_s = 10.0;
  cfg.model.cnn_a = {3, 4};
  cfg.model.cnn_b = {5, 4};
  cfg.model.gru_layers = {8, 6};
  cfg.model.branch_fc = {8, 6, 4};
  cfg.train.epochs_max = 3;
  cfg.train.batch_size = 4;
  cfg.train.patience = 3;
  cfg.train.augment_copies = 1;
  cfg.train.augment_sigmas = {0.02};
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PPGGLU_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config file parsing and overrides") {
  RunConfig cfg;
  cfg.apply(kv::parse("seed = 5\nlearning_rate = 0.01\ngru_layers = 16, 8\n"
                      "# comment\nkfolds = 4\n"));
  CHECK(cfg.seed == 5);
  CHECK(cfg.train.adam.lr == 0.01);
  CHECK(cfg.model.gru_layers == std::vector<std::size_t>{16, 8});
  CHECK(cfg.kfolds == 4);

  // later values override earlier ones, as CLI flags override the file
  cfg.apply({{"seed", "9"}});
  CHECK(cfg.seed == 9);

  CHECK_THROWS_AS(cfg.apply({{"no_such_key", "1"}}), InvalidConfig);
  CHECK_THROWS_AS(cfg.apply({{"seed", "abc"}}), InvalidConfig);

  // window_len drives both preprocessing and the model input width
  cfg.apply({{"window_len", "120"}});
  CHECK(cfg.preproc.window_len == 120);
  CHECK(cfg.model.window_len == 120);
}

TEST_CASE("synth writes the standard layout deterministically") {
  TempDir dir("synth");
  RunConfig cfg = tiny_config(dir);
  cfg.synth_count = 10;
  cfg.out_dir = dir.path / "ds";
  std::ostringstream log;
  cmd_synth(cfg, log);

  CHECK(count_data_rows(slurp(cfg.out_dir / "labels.csv")) == 10);
  std::size_t signal_files = 0;
  for (const auto& e : fs::directory_iterator(cfg.out_dir / "signals"))
    if (e.is_regular_file()) ++signal_files;
  CHECK(signal_files == 10);

  const auto first = snapshot(cfg.out_dir);
  cmd_synth(cfg, log);
  CHECK(snapshot(cfg.out_dir) == first);

  // the generated directory feeds preprocess without error
  RunConfig pre = tiny_config(dir);
  pre.dataset_root = cfg.out_dir;
  cmd_preprocess(pre, log);
  CHECK(fs::exists(pre.out_dir / "windows.csv"));
}

TEST_CASE("preprocess shape, determinism and error reporting") {
  TempDir dir("preprocess");
  RunConfig cfg = tiny_config(dir);
  cfg.synth_count = 2;
  {
    RunConfig gen = cfg;
    gen.out_dir = cfg.dataset_root;
    std::ostringstream log;
    cmd_synth(gen, log);
  }

  std::ostringstream log;
  cfg.quiet = false;
  cmd_preprocess(cfg, log);
  CHECK(log.str().find("label histogram") != std::string::npos);

  const std::string csv = slurp(cfg.out_dir / "windows.csv");
  CHECK(count_data_rows(csv) == 2);
  std::istringstream rows(csv);
  std::string line;
  while (std::getline(rows, line))
    CHECK(detail::split_csv_row(line).size() == 302);

  cmd_preprocess(cfg, log);
  CHECK(slurp(cfg.out_dir / "windows.csv") == csv);

  // corrupt one signal file: the error names the record
  {
    std::ofstream sig(cfg.dataset_root / "signals" / "synth0001.csv",
                      std::ios::binary | std::ios::trunc);
    sig << "1.0\nnot-a-number\n";
  }
  try {
    cmd_preprocess(cfg, log);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("synth0001") != std::string::npos);
    CHECK(exit_code_for(e) == 2);
  }
}

TEST_CASE("train writes all artifacts and is seed deterministic") {
  TempDir dir("train");
  RunConfig cfg = tiny_config(dir);
  cfg.synth_count = 20;
  cfg.seed = 17;
  {
    RunConfig gen = cfg;
    gen.out_dir = cfg.dataset_root;
    std::ostringstream log;
    cmd_synth(gen, log);
  }

  std::ostringstream log;
  cfg.quiet = false;
  cmd_train(cfg, log);
  for (const char* name : {"model.bin", "history.csv", "metrics.csv", "ceg.csv", "ceg.svg"})
    CHECK(fs::exists(cfg.out_dir / name));

  // headline metrics printed in the order MAE, MAPE, R2, RMSE
  const std::string text = log.str();
  CHECK(text.find("MAE:") < text.find("MAPE:"));
  CHECK(text.find("MAPE:") < text.find("R2:"));
  CHECK(text.find("R2:") < text.find("RMSE:"));

  const std::string metrics = slurp(cfg.out_dir / "metrics.csv");
  CHECK(metrics.rfind("mae_mgdl,mape_pct,r2,rmse_mgdl\n", 0) == 0);
  const std::string history = slurp(cfg.out_dir / "history.csv");
  CHECK(history.rfind("epoch,train_mse,val_mse\n", 0) == 0);

  cmd_train(cfg, log);
  CHECK(slurp(cfg.out_dir / "metrics.csv") == metrics);
  CHECK(slurp(cfg.out_dir / "history.csv") == history);
}

TEST_CASE("crossval writes one row per fold and rejects k > n") {
  TempDir dir("crossval");
  RunConfig cfg = tiny_config(dir);
  cfg.synth_count = 12;
  cfg.kfolds = 4;
  cfg.seed = 23;
  {
    RunConfig gen = cfg;
    gen.out_dir = cfg.dataset_root;
    std::ostringstream log;
    cmd_synth(gen, log);
  }

  std::ostringstream log;
  cmd_crossval(cfg, log);
  const std::string folds = slurp(cfg.out_dir / "folds.csv");
  CHECK(folds.rfind("fold,mae,rmse\n", 0) == 0);
  CHECK(count_data_rows(folds) == 4);

  cfg.kfolds = 13;
  try {
    cmd_crossval(cfg, log);
    FAIL("expected an error");
  } catch (const TooFewSamples& e) {
    CHECK(exit_code_for(e) == 2);
  }
}

TEST_CASE("ceg command summarizes a predictions csv") {
  TempDir dir("ceg");
  RunConfig cfg = tiny_config(dir);
  std::ostringstream log;

  const fs::path preds = dir.path / "preds.csv";
  {
    std::ofstream out(preds);
    out << "ref_mgdl,pred_mgdl\n100,100\n150,150\n";
  }
  cmd_ceg(cfg, preds, log);
  CHECK(slurp(cfg.out_dir / "ceg.csv").find("A,2,100.0") != std::string::npos);
  CHECK(fs::exists(cfg.out_dir / "ceg.svg"));

  {
    std::ofstream out(preds);
    out << "ref_mgdl,pred_mgdl\n100,115\n60,65\n200,60\n";
  }
  cmd_ceg(cfg, preds, log);
  const std::string csv = slurp(cfg.out_dir / "ceg.csv");
  CHECK(csv.find("A,2,") != std::string::npos);
  CHECK(csv.find("E,1,") != std::string::npos);

  {
    std::ofstream out(preds);
    out << "ref_mgdl,pred_mgdl\n";
  }
  CHECK_THROWS_AS(cmd_ceg(cfg, preds, log), MalformedCsv);
  {
    std::ofstream out(preds);
    out << "wrong,header\n100,100\n";
  }
  CHECK_THROWS_AS(cmd_ceg(cfg, preds, log), MalformedCsv);
  CHECK_THROWS_AS(cmd_ceg(cfg, dir.path / "absent.csv", log), MissingFile);
}

TEST_CASE("exit code classification") {
  CHECK(exit_code_for(NonFiniteLoss("epoch 1")) == 3);
  CHECK(exit_code_for(MissingFile("labels.csv")) == 2);
  CHECK(exit_code_for(InvalidConfig("bad key")) == 2);
  CHECK(exit_code_for(std::runtime_error("fold 3: boom")) == 3);
}

TEST_CASE("binary exit codes and quiet mode") {
  TempDir dir("binary");
  const std::string ds = (dir.path / "ds").string();
  CHECK(run_cli("synth --count 3 --seed 1 --out " + ds + " --quiet") == 0);
  CHECK(run_cli("preprocess --data " + ds + " --out " + (dir.path / "out").string()) == 0);
  CHECK(run_cli("preprocess --data " + (dir.path / "missing").string() + " --out " +
                (dir.path / "out2").string()) == 2);
  CHECK(run_cli("ceg " + (dir.path / "absent.csv").string() + " --out " +
                (dir.path / "out3").string()) == 2);
}
