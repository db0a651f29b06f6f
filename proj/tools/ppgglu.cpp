#include <CLI11.hpp>
#include <iostream>

#include "ppgglu/cli.hpp"

namespace {

struct NullBuffer : std::streambuf {
  int overflow(int c) override { return c; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG blood glucose estimation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  long long seed = -1;
  bool quiet = false;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--data", data_dir, "dataset root directory");
  app.add_flag("--quiet", quiet, "suppress normal output");

  auto* preprocess = app.add_subcommand("preprocess", "filter, resample and window a dataset");
  auto* train = app.add_subcommand("train", "train on a split and evaluate on the test set");
  auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation");
  auto* ceg = app.add_subcommand("ceg", "Clarke error grid analysis of a predictions csv");
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  for (auto* sub : {preprocess, train, crossval, ceg, synth}) sub->fallthrough();

  std::size_t kfolds = 0, parallel_folds = 0, synth_count = 0;
  crossval->add_option("--k", kfolds, "number of folds");
  crossval->add_option("--parallel-folds", parallel_folds, "train folds on N threads");
  synth->add_option("--count", synth_count, "number of records");
  std::string predictions_csv;
  ceg->add_option("predictions", predictions_csv, "csv with header ref_mgdl,pred_mgdl")
      ->required();

  CLI11_PARSE(app, argc, argv);

  NullBuffer null_buffer;
  std::ostream null_stream(&null_buffer);
  std::ostream& log = quiet ? null_stream : std::cout;

  try {
    ppgglu::RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!data_dir.empty()) cfg.dataset_root = data_dir;
    if (quiet) cfg.quiet = true;
    if (kfolds > 0) cfg.kfolds = kfolds;
    if (parallel_folds > 0) cfg.parallel_folds = parallel_folds;
    if (synth_count > 0) cfg.synth_count = synth_count;

    if (preprocess->parsed()) ppgglu::cmd_preprocess(cfg, log);
    else if (train->parsed()) ppgglu::cmd_train(cfg, log);
    else if (crossval->parsed()) ppgglu::cmd_crossval(cfg, log);
    else if (ceg->parsed()) ppgglu::cmd_ceg(cfg, predictions_csv, log);
    else if (synth->parsed()) ppgglu::cmd_synth(cfg, log);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ppgglu::exit_code_for(e);
  }
  return 0;
}
