#ifndef PPGGLU_TRAIN_HPP
#define PPGGLU_TRAIN_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "ppgglu/adam.hpp"
#include "ppgglu/dataset.hpp"
#include "ppgglu/errors.hpp"
#include "ppgglu/metrics.hpp"
#include "ppgglu/model.hpp"
#include "ppgglu/signal.hpp"
#include "ppgglu/tensor.hpp"

namespace ppgglu {

struct TrainConfig {
  std::size_t epochs_max = 500;
  std::size_t batch_size = 16;
  std::size_t patience = 50;
  AdamHyper adam;
  std::size_t augment_copies = 3;
  std::vector<double> augment_sigmas{0.01, 0.03, 0.05};
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs_max < 1) throw InvalidConfig("epochs_max must be >= 1");
    if (batch_size < 2) throw InvalidConfig("batch_size must be >= 2");
    if (patience < 1) throw InvalidConfig("patience must be >= 1");
    if (augment_copies != augment_sigmas.size())
      throw InvalidConfig("augment_copies must match the sigma list length");
  }
};

struct TrainHistory {
  std::vector<double> train_mse;  // mg/dL^2, per epoch
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;  // 0-based index of the minimum validation MSE
  bool stopped_early = false;
};

inline std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (std::size_t i = 0; i < h.train_mse.size(); ++i)
    out += std::to_string(i + 1) + "," + detail::fmt(h.train_mse[i], 6) + "," +
           detail::fmt(h.val_mse[i], 6) + "\n";
  return out;
}

namespace detail {

// seed fan-out: one user seed, documented offsets per consumer
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t x = seed ^ (0xA076'1D64'78BD'642FULL * (stream + 1)) ^
                    (0xE703'7ED1'A0B4'28DBULL * (index + 1));
  return Rng::splitmix64(x);
}

constexpr std::uint64_t kStreamSplit = 1;
constexpr std::uint64_t kStreamInit = 2;
constexpr std::uint64_t kStreamAugment = 3;
constexpr std::uint64_t kStreamBatchOrder = 4;

struct ModelSnapshot {
  std::vector<std::vector<double>> params;
  std::vector<std::vector<double>> bn;

  static ModelSnapshot capture(HybridModel& m) {
    ModelSnapshot s;
    for (Tensor* t : m.parameters()) s.params.push_back(t->values());
    for (BatchNormState* st : m.bn_states()) {
      s.bn.push_back(st->running_mean);
      s.bn.push_back(st->running_var);
    }
    return s;
  }

  void restore(HybridModel& m) const {
    auto ps = m.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->values() = params[i];
    auto bns = m.bn_states();
    for (std::size_t i = 0; i < bns.size(); ++i) {
      bns[i]->running_mean = bn[2 * i];
      bns[i]->running_var = bn[2 * i + 1];
    }
  }
};

inline double eval_mse(HybridModel& model, const std::vector<Window>& windows) {
  const auto preds = model.predict(windows);
  double acc = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double e = preds[i] - windows[i].glucose_mgdl;
    acc += e * e;
  }
  return acc / static_cast<double>(windows.size());
}

}  // namespace detail

// Mini-batch Adam on MSE with early stopping on validation MSE; the
// returned model carries the best-epoch parameters, not the last ones.
inline TrainHistory train(HybridModel& model, const std::vector<Window>& train_windows,
                          const std::vector<Window>& val_windows,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (train_windows.empty() || val_windows.empty())
    throw EmptySplit("train: empty training or validation set");

  std::vector<AdamState> states;
  auto params = model.parameters();
  states.reserve(params.size());
  for (Tensor* p : params) states.emplace_back(p->numel(), cfg.adam);

  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  detail::ModelSnapshot best;
  std::size_t epochs_without_improvement = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs_max; ++epoch) {
    const auto order = random_permutation(
        train_windows.size(),
        detail::derive_seed(cfg.seed, detail::kStreamBatchOrder, epoch));

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<Window> batch;
      std::vector<double> targets;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train_windows[order[i]]);
        targets.push_back(train_windows[order[i]].glucose_mgdl);
      }
      model.zero_grad();
      Tape tape;
      Tensor pred = model.forward(batch, &tape, true);
      Tensor target({batch.size(), 1}, std::move(targets));
      Tensor loss = mse_loss(&tape, pred, target);
      if (!std::isfinite(loss.at(0)))
        throw NonFiniteLoss("epoch " + std::to_string(epoch + 1) + " batch " +
                            std::to_string(batch_index + 1) + ": loss " +
                            std::to_string(loss.at(0)));
      tape.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i)
        adam_step(*params[i], states[i]);
      epoch_loss += loss.at(0) * static_cast<double>(end - start);
    }
    history.train_mse.push_back(epoch_loss / static_cast<double>(order.size()));

    const double val = detail::eval_mse(model, val_windows);
    if (!std::isfinite(val))
      throw NonFiniteLoss("epoch " + std::to_string(epoch + 1) +
                          ": validation loss non-finite");
    history.val_mse.push_back(val);

    if (val < best_val) {
      best_val = val;
      history.best_epoch = epoch;
      best = detail::ModelSnapshot::capture(model);
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= cfg.patience) {
        history.stopped_early = true;
        break;
      }
    }
  }
  best.restore(model);
  return history;
}

struct FoldResult {
  std::size_t fold_index = 0;  // 0-based
  double test_mae_mgdl = 0.0;
  double test_rmse_mgdl = 0.0;
  std::filesystem::path model_path;  // empty when models are not persisted
};

inline std::vector<FoldRow> fold_rows(const std::vector<FoldResult>& results) {
  std::vector<FoldRow> rows;
  for (const auto& r : results)
    rows.push_back({r.fold_index + 1, r.test_mae_mgdl, r.test_rmse_mgdl});
  return rows;
}

// k-fold cross-validation: each fold trains a fresh model (seeded by
// fold index) on the remaining pool, split 85/15 into train/val, with
// Gaussian augmentation applied to the training windows only.
inline std::vector<FoldResult> cross_validate(
    const Dataset& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
    std::size_t k = 10, const PreprocConfig& preproc = {},
    const std::filesystem::path& model_dir = {}, std::size_t parallel = 1) {
  train_cfg.validate();
  if (dataset.size() < k)
    throw TooFewSamples("cross_validate: " + std::to_string(dataset.size()) +
                        " records < k=" + std::to_string(k));

  std::vector<Window> windows;
  windows.reserve(dataset.size());
  for (const auto& rec : dataset.records) windows.push_back(preprocess(rec, preproc));

  const FoldPlan plan =
      kfold(dataset.size(), k, detail::derive_seed(train_cfg.seed, detail::kStreamSplit));

  std::vector<FoldResult> results(k);
  std::vector<std::string> errors(k);
  std::atomic<std::size_t> next{0};

  auto run_fold = [&](std::size_t fold) {
    try {
      std::vector<bool> in_test(dataset.size(), false);
      for (auto i : plan.folds[fold]) in_test[i] = true;
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < dataset.size(); ++i)
        if (!in_test[i]) pool.push_back(i);

      // 85/15 train/val split of the pool, per-fold seed
      const auto perm = random_permutation(
          pool.size(),
          detail::derive_seed(train_cfg.seed, detail::kStreamSplit, fold + 1));
      const std::size_t n_train = std::max<std::size_t>(
          1, static_cast<std::size_t>(0.85 * static_cast<double>(pool.size())));
      std::vector<Window> train_w, val_w, test_w;
      for (std::size_t i = 0; i < pool.size(); ++i)
        (i < n_train ? train_w : val_w).push_back(windows[pool[perm[i]]]);
      for (auto i : plan.folds[fold]) test_w.push_back(windows[i]);
      if (val_w.empty()) val_w.push_back(train_w.back());

      train_w = augment_gaussian(
          train_w, train_cfg.augment_copies, train_cfg.augment_sigmas,
          detail::derive_seed(train_cfg.seed, detail::kStreamAugment, fold));

      ModelConfig fold_model_cfg = model_cfg;
      fold_model_cfg.seed =
          detail::derive_seed(train_cfg.seed + model_cfg.seed, detail::kStreamInit, fold);
      HybridModel model = build(fold_model_cfg);
      TrainConfig fold_train_cfg = train_cfg;
      fold_train_cfg.seed = detail::derive_seed(train_cfg.seed, detail::kStreamInit,
                                                0x1000 + fold);
      train(model, train_w, val_w, fold_train_cfg);

      std::vector<double> refs, preds = model.predict(test_w);
      for (const auto& w : test_w) refs.push_back(w.glucose_mgdl);
      double mae = 0.0, mse = 0.0;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const double e = preds[i] - refs[i];
        mae += std::fabs(e);
        mse += e * e;
      }
      const double n = static_cast<double>(refs.size());

      FoldResult res;
      res.fold_index = fold;
      res.test_mae_mgdl = mae / n;
      res.test_rmse_mgdl = std::sqrt(mse / n);
      if (!model_dir.empty()) {
        res.model_path = model_dir / ("fold" + std::to_string(fold + 1) + ".model");
        model.save(res.model_path);
      }
      results[fold] = res;
    } catch (const std::exception& e) {
      errors[fold] = e.what();
    }
  };

  if (parallel <= 1) {
    for (std::size_t fold = 0; fold < k; ++fold) run_fold(fold);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(parallel, k); ++w)
      workers.emplace_back([&] {
        for (std::size_t fold = next.fetch_add(1); fold < k; fold = next.fetch_add(1))
          run_fold(fold);
      });
    for (auto& t : workers) t.join();
  }

  for (std::size_t fold = 0; fold < k; ++fold)
    if (!errors[fold].empty())
      throw std::runtime_error("fold " + std::to_string(fold + 1) + ": " +
                               errors[fold]);
  return results;
}

}  // namespace ppgglu

#endif  // PPGGLU_TRAIN_HPP
