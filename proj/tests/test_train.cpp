#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ppgglu/train.hpp"

using namespace ppgglu;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.window_len = 300;
  cfg.cnn_a = {3, 4};
  cfg.cnn_b = {5, 4};
  cfg.gru_layers = {8, 6};
  cfg.branch_fc = {8, 6, 4};
  cfg.seed = 1;
  return cfg;
}

std::vector<Window> synth_windows(std::size_t count, std::uint64_t seed) {
  auto ds = synth_generate(count, seed, 300.0, 10.0);
  std::vector<Window> out;
  for (const auto& r : ds.records) out.push_back(preprocess(r));
  return out;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = {};
  cfg.augment_copies = 2;
  cfg.augment_sigmas = {0.1};
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}

TEST_CASE("training reduces the loss on a small synthetic set") {
  auto windows = synth_windows(8, 101);
  HybridModel model = build(tiny_model());
  TrainConfig cfg;
  cfg.epochs_max = 120;
  cfg.batch_size = 8;
  cfg.patience = 120;
  cfg.adam.lr = 0.05;
  cfg.seed = 5;
  auto history = train(model, windows, windows, cfg);
  REQUIRE(!history.train_mse.empty());
  CHECK(history.train_mse.back() < 0.05 * history.train_mse.front());

  // returned parameters achieve the minimum recorded validation loss
  const double best = *std::min_element(history.val_mse.begin(), history.val_mse.end());
  CHECK(history.val_mse[history.best_epoch] == best);
  double restored = 0.0;
  auto preds = model.predict(windows);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double e = preds[i] - windows[i].glucose_mgdl;
    restored += e * e;
  }
  restored /= static_cast<double>(windows.size());
  CHECK(restored == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("patience 1 with frozen weights stops after exactly two epochs") {
  auto windows = synth_windows(4, 102);
  HybridModel model = build(tiny_model());
  TrainConfig cfg;
  cfg.epochs_max = 50;
  cfg.batch_size = 4;
  cfg.patience = 1;
  cfg.adam.lr = 0.0;  // loss can never improve
  cfg.seed = 6;
  auto history = train(model, windows, windows, cfg);
  CHECK(history.val_mse.size() == 2);
  CHECK(history.stopped_early);
  CHECK(history.best_epoch == 0);
}

TEST_CASE("training is deterministic in the seed") {
  auto windows = synth_windows(6, 103);
  std::vector<Window> val(windows.begin() + 4, windows.end());
  std::vector<Window> tr(windows.begin(), windows.begin() + 4);

  TrainConfig cfg;
  cfg.epochs_max = 5;
  cfg.batch_size = 2;
  cfg.patience = 5;
  cfg.seed = 7;

  HybridModel m1 = build(tiny_model());
  auto h1 = train(m1, tr, val, cfg);
  HybridModel m2 = build(tiny_model());
  auto h2 = train(m2, tr, val, cfg);
  CHECK(h1.train_mse == h2.train_mse);
  CHECK(h1.val_mse == h2.val_mse);
  CHECK(h1.best_epoch == h2.best_epoch);
  CHECK(m1.predict(val) == m2.predict(val));
}

TEST_CASE("train error contracts") {
  auto windows = synth_windows(4, 104);
  HybridModel model = build(tiny_model());
  TrainConfig cfg;
  CHECK_THROWS_AS(train(model, {}, windows, cfg), EmptySplit);
  CHECK_THROWS_AS(train(model, windows, {}, cfg), EmptySplit);
}

TEST_CASE("history csv layout") {
  TrainHistory h;
  h.train_mse = {4.0, 2.0};
  h.val_mse = {5.0, 3.0};
  const auto csv = history_csv(h);
  CHECK(csv.rfind("epoch,train_mse,val_mse\n", 0) == 0);
  CHECK(csv.find("1,4.000000,5.000000") != std::string::npos);
  CHECK(csv.find("2,2.000000,3.000000") != std::string::npos);
}

TEST_CASE("cross_validate on a small synthetic dataset") {
  auto ds = synth_generate(20, 105, 300.0, 10.0);
  ModelConfig mc = tiny_model();
  TrainConfig tc;
  tc.epochs_max = 3;
  tc.batch_size = 4;
  tc.patience = 3;
  tc.augment_copies = 1;
  tc.augment_sigmas = {0.02};
  tc.seed = 11;

  auto results = cross_validate(ds, mc, tc, 2);
  REQUIRE(results.size() == 2);
  std::set<std::size_t> fold_ids;
  for (const auto& r : results) {
    fold_ids.insert(r.fold_index);
    CHECK(r.test_mae_mgdl <= r.test_rmse_mgdl + 1e-12);
    CHECK(std::isfinite(r.test_mae_mgdl));
  }
  CHECK(fold_ids.size() == 2);

  // determinism of the whole harness
  auto again = cross_validate(ds, mc, tc, 2);
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].test_mae_mgdl == again[i].test_mae_mgdl);
    CHECK(results[i].test_rmse_mgdl == again[i].test_rmse_mgdl);
  }

  CHECK_THROWS_AS(cross_validate(ds, mc, tc, 21), TooFewSamples);

  auto rows = fold_rows(results);
  CHECK(rows[0].fold == 1);
  CHECK(rows[1].fold == 2);
}

TEST_CASE("parallel folds merge deterministically") {
  auto ds = synth_generate(12, 106, 300.0, 10.0);
  ModelConfig mc = tiny_model();
  TrainConfig tc;
  tc.epochs_max = 2;
  tc.batch_size = 4;
  tc.patience = 2;
  tc.augment_copies = 0;
  tc.augment_sigmas = {};
  tc.seed = 12;

  auto seq = cross_validate(ds, mc, tc, 3, {}, {}, 1);
  auto par = cross_validate(ds, mc, tc, 3, {}, {}, 3);
  REQUIRE(seq.size() == par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(seq[i].test_mae_mgdl == par[i].test_mae_mgdl);
    CHECK(seq[i].test_rmse_mgdl == par[i].test_rmse_mgdl);
  }
}
