// Acceptance harness: runs every acceptance criterion, prints one
// pass/fail line per criterion, and writes acceptance.md with the table
//   id | description | measured | threshold | status | seconds
// Exit status is nonzero iff any non-skipped criterion fails.
#include <CLI11.hpp>

#include <chrono>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "ppgglu/cli.hpp"
#include "support/grad_check.hpp"
#include "support/oracles.hpp"

using namespace ppgglu;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  int id = 0;
  std::string description;
  std::string measured;
  std::string threshold;
  std::string status;  // pass / fail / skip
  double seconds = 0.0;
};

struct Harness {
  fs::path run_dir;
  fs::path data_dir;
  bool force_fail = false;
  std::vector<CriterionResult> results;

  void run(int id, const std::string& description, const std::string& threshold,
           const std::function<std::pair<bool, std::string>()>& body) {
    CriterionResult r;
    r.id = id;
    r.description = description;
    r.threshold = threshold;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto [ok, measured] = body();
      r.measured = measured;
      r.status = ok ? "pass" : "fail";
    } catch (const std::exception& e) {
      r.measured = std::string("exception: ") + e.what();
      r.status = "fail";
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (r.status == "pass" ? "PASS" : "FAIL") << "  " << id << ". "
              << description << "  [" << r.measured << " vs " << threshold << ", "
              << detail::fmt(r.seconds, 1) << " s]\n";
    results.push_back(r);
  }

  void skip(int id, const std::string& description, const std::string& threshold,
            const std::string& reason) {
    std::cout << "SKIP  " << id << ". " << description << "  [" << reason << "]\n";
    results.push_back({id, description, reason, threshold, "skip", 0.0});
  }

  bool all_passed() const {
    for (const auto& r : results)
      if (r.status == "fail") return false;
    return true;
  }

  void write_markdown(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    out << "# Acceptance run\n\n";
    out << "| id | description | measured | threshold | status | seconds |\n";
    out << "| --- | --- | --- | --- | --- | --- |\n";
    for (const auto& r : results)
      out << "| " << r.id << " | " << r.description << " | " << r.measured << " | "
          << r.threshold << " | " << r.status << " | " << detail::fmt(r.seconds, 1)
          << " |\n";
  }
};

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

ModelConfig small_hybrid() {
  ModelConfig cfg;
  cfg.window_len = 30;
  cfg.cnn_a = {3, 4};
  cfg.cnn_b = {5, 4};
  cfg.gru_layers = {8, 6};
  cfg.branch_fc = {8, 6, 4};
  cfg.seed = 21;
  return cfg;
}

// ---- criterion bodies -------------------------------------------------

std::pair<bool, std::string> crit_gradients() {
  double worst = 0.0;
  Rng rng(101);

  {  // conv1d
    std::vector<Tensor> params = {random_tensor({2, 8}, rng),
                                  random_tensor({3, 2, 3}, rng),
                                  random_tensor({3}, rng)};
    auto res = gradcheck::check(params, [&](Tape* t) {
      return sum(t, conv1d(t, params[0], params[1], params[2]));
    });
    worst = std::max(worst, res.max_rel_err);
  }
  {  // maxpool
    std::vector<Tensor> params = {random_tensor({3, 10}, rng)};
    auto res = gradcheck::check(params, [&](Tape* t) {
      return sum(t, maxpool1d(t, params[0]));
    });
    worst = std::max(worst, res.max_rel_err);
  }
  {  // batchnorm (training mode)
    std::vector<Tensor> params = {random_tensor({5, 3}, rng), random_tensor({3}, rng),
                                  random_tensor({3}, rng)};
    auto res = gradcheck::check(params, [&](Tape* t) {
      BatchNormState state(3);
      Tensor y = batchnorm1d(t, params[0], params[1], params[2], state, true);
      return sum(t, mul(t, y, y));
    });
    worst = std::max(worst, res.max_rel_err);
  }
  {  // dense
    std::vector<Tensor> params = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
                                  random_tensor({2}, rng)};
    auto res = gradcheck::check(params, [&](Tape* t) {
      return sum(t, relu(t, dense(t, params[0], params[1], params[2])));
    });
    worst = std::max(worst, res.max_rel_err);
  }
  {  // GRU unrolled 5 steps
    GruParams gru{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng),
                  random_tensor({2, 3}, rng), random_tensor({3, 3}, rng),
                  random_tensor({3, 3}, rng), random_tensor({3, 3}, rng),
                  random_tensor({3}, rng),    random_tensor({3}, rng),
                  random_tensor({3}, rng)};
    std::vector<Tensor> params;
    for (Tensor* p : gru.parameters()) params.push_back(*p);
    std::vector<Tensor> inputs;
    for (int s = 0; s < 5; ++s) inputs.push_back(random_tensor({2, 2}, rng, false));
    auto res = gradcheck::check(params, [&](Tape* t) {
      Tensor h = Tensor::zeros({2, 3});
      for (const auto& x : inputs) h = gru_step(t, x, h, gru);
      return sum(t, mul(t, h, h));
    });
    worst = std::max(worst, res.max_rel_err);
  }
  {  // full hybrid model, 10-parameter slice
    HybridModel model = build(small_hybrid());
    Rng brng(9);
    std::vector<Window> batch;
    for (int i = 0; i < 3; ++i) {
      Window w;
      w.glucose_mgdl = brng.uniform(80.0, 180.0);
      for (int j = 0; j < 30; ++j) w.values.push_back(brng.next_double());
      batch.push_back(w);
    }
    Tensor targets({3, 1}, {100, 130, 150});
    auto fwd = [&](Tape* t) {
      return mse_loss(t, model.forward(batch, t, true), targets);
    };
    auto params = model.parameters();
    std::vector<std::pair<Tensor*, std::size_t>> coords = {
        {params[0], 0},  {params[2], 1},  {params[4], 2},  {params[7], 3},
        {params[8], 5},  {params[9], 0},  {params[20], 1}, {params[26], 0},
        {params[38], 2}, {params[params.size() - 2], 0}};
    auto res = gradcheck::check_slice(coords, [&] { model.zero_grad(); }, fwd);
    worst = std::max(worst, res.max_rel_err);
  }
  return {worst < 1e-4, "max rel err " + detail::fmt(worst, 8)};
}

std::pair<bool, std::string> crit_kernel_oracles(bool force_fail) {
  Rng rng(202);
  double max_diff = 0.0;
  const double corruption = force_fail ? 1e-3 : 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cin = 1 + rng.below(3);
    const std::size_t cout = 1 + rng.below(3);
    const std::size_t len = 4 + rng.below(12);
    const std::size_t kw = 1 + 2 * rng.below(3);
    Tensor x = random_tensor({cin, len}, rng, false);
    Tensor k = random_tensor({cout, cin, kw}, rng, false);
    Tensor b = random_tensor({cout}, rng, false);
    auto got = conv1d(nullptr, x, k, b);
    auto want = oracle::conv1d(x.values(), cin, len, k.values(), cout, kw, b.values());
    for (std::size_t i = 0; i < want.size(); ++i)
      max_diff = std::max(max_diff, std::fabs(got.at(i) - (want[i] + corruption)));
    auto pooled = maxpool1d(nullptr, x);
    auto pooled_want = oracle::maxpool1d(x.values(), cin, len);
    for (std::size_t i = 0; i < pooled_want.size(); ++i)
      max_diff = std::max(max_diff, std::fabs(pooled.at(i) - pooled_want[i]));
  }
  return {max_diff == 0.0, "max abs diff " + detail::fmt(max_diff, 8)};
}

std::pair<bool, std::string> crit_filter_response() {
  const double fs = 2175.0;
  const std::size_t n = static_cast<std::size_t>(fs * 10.0);
  auto rms = [](const std::vector<double>& v, std::size_t from, std::size_t to) {
    double acc = 0.0;
    for (std::size_t i = from; i < to; ++i) acc += v[i] * v[i];
    return std::sqrt(acc / static_cast<double>(to - from));
  };

  std::vector<double> dc(n, 1.0);
  const auto dc_out = bandpass_filter(dc, fs);
  const double dc_ratio = rms(dc_out, 0, n);

  auto tone = [&](double f_hz) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
      v[i] = std::sin(2.0 * M_PI * f_hz * static_cast<double>(i) / fs);
    return v;
  };
  const auto mid = bandpass_filter(tone(2.0), fs);
  const std::size_t lo = n / 10, hi = n - n / 10;
  const double amp2 = rms(mid, lo, hi) * std::sqrt(2.0);
  const auto high = bandpass_filter(tone(20.0), fs);
  const double atten_db = -20.0 * std::log10(rms(high, lo, hi) * std::sqrt(2.0));

  const bool ok = dc_ratio < 0.01 && std::fabs(amp2 - 1.0) < 0.05 && atten_db >= 20.0;
  return {ok, "dc rms " + detail::fmt(dc_ratio, 5) + ", 2 Hz amp " +
                  detail::fmt(amp2, 4) + ", 20 Hz atten " + detail::fmt(atten_db, 1) +
                  " dB"};
}

std::pair<bool, std::string> crit_resampler() {
  const double fs_in = 2175.0, fs_out = 30.0, f_tone = 2.0;
  const std::size_t n = 21750;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = std::sin(2.0 * M_PI * f_tone * static_cast<double>(i) / fs_in);
  const auto y = resample(x, fs_in, fs_out);

  double rmse = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double want = std::sin(2.0 * M_PI * f_tone * static_cast<double>(i) / fs_out);
    rmse += (y[i] - want) * (y[i] - want);
  }
  rmse = std::sqrt(rmse / static_cast<double>(y.size()));

  // dominant DFT bin of the 10 s resampled tone must sit at 2 Hz (bin 20)
  std::size_t peak_bin = 0;
  double peak_mag = 0.0;
  for (std::size_t k = 1; k < y.size() / 2; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < y.size(); ++i)
      acc += y[i] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * i) /
                                        static_cast<double>(y.size()));
    if (std::abs(acc) > peak_mag) {
      peak_mag = std::abs(acc);
      peak_bin = k;
    }
  }
  const bool ok = y.size() == 300 && peak_bin == 20 && rmse < 1e-3;
  return {ok, "len " + std::to_string(y.size()) + ", peak bin " +
                  std::to_string(peak_bin) + ", rmse " + detail::fmt(rmse, 6)};
}

std::pair<bool, std::string> crit_ceg_sweep() {
  std::size_t mismatches = 0;
  for (int ref = 1; ref <= 600; ++ref)
    for (int pred = 1; pred <= 600; ++pred)
      if (static_cast<int>(ceg_zone(ref, pred)) !=
          static_cast<int>(oracle::ceg_zone(ref, pred)))
        ++mismatches;
  const bool examples = ceg_zone(100, 115) == CegZone::A && ceg_zone(60, 65) == CegZone::A;
  return {mismatches == 0 && examples,
          std::to_string(mismatches) + " mismatches on 600x600 grid"};
}

std::pair<bool, std::string> crit_metrics() {
  Rng rng(303);
  double worst = 0.0;
  auto rel = [](double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> refs, preds;
    for (std::size_t i = 0; i < n; ++i) {
      refs.push_back(rng.uniform(40.0, 400.0));
      preds.push_back(rng.uniform(40.0, 400.0));
    }
    auto got = compute_metrics(refs, preds);
    auto want = oracle::metrics(refs, preds);
    worst = std::max({worst, rel(got.mae_mgdl, want.mae), rel(got.mse_mgdl2, want.mse),
                      rel(got.rmse_mgdl, want.rmse), rel(got.mape_percent, want.mape),
                      rel(got.r2(), want.r2)});
  }
  std::vector<double> refs = {90, 110, 150, 200};
  auto perfect = compute_metrics(refs, refs);
  auto ceg = ceg_summary(refs, refs);
  const bool trivial =
      perfect.mae_mgdl == 0.0 && perfect.r2() == 1.0 && ceg.percents[0] == 100.0;
  return {worst < 1e-12 && trivial, "max rel err " + detail::fmt(worst, 14)};
}

std::pair<bool, std::string> crit_partitions() {
  for (std::size_t n = 3; n <= 500; ++n) {
    const auto idx = split(n, {}, 77 + n);
    std::vector<int> seen(n, 0);
    for (auto i : idx.train) ++seen[i];
    for (auto i : idx.val) ++seen[i];
    for (auto i : idx.test) ++seen[i];
    for (auto c : seen)
      if (c != 1) return {false, "split not a partition at n=" + std::to_string(n)};

    const std::size_t k = std::min<std::size_t>(10, n);
    const auto plan = kfold(n, k, 78 + n);
    std::fill(seen.begin(), seen.end(), 0);
    std::size_t mx = 0, mn = n;
    for (const auto& fold : plan.folds) {
      mx = std::max(mx, fold.size());
      mn = std::min(mn, fold.size());
      for (auto i : fold) ++seen[i];
    }
    if (mx - mn > 1) return {false, "fold sizes differ by >1 at n=" + std::to_string(n)};
    for (auto c : seen)
      if (c != 1) return {false, "kfold not a partition at n=" + std::to_string(n)};
  }
  const auto idx67 = split(67, {}, 5);
  const auto plan67 = kfold(67, 10, 5);
  std::size_t sevens = 0, sixes = 0;
  for (const auto& f : plan67.folds) (f.size() == 7 ? sevens : sixes) += 1;
  const bool ok = idx67.train.size() == 46 && idx67.val.size() == 10 &&
                  idx67.test.size() == 11 && sevens == 7 && sixes == 3;
  return {ok, "all n in [3,500]; n=67 split 46/10/11, folds 7x7 + 3x6"};
}

std::pair<bool, std::string> crit_overfit() {
  auto ds = synth_generate(16, 1, 300.0, 10.0);
  std::vector<Window> w;
  std::vector<double> targets;
  for (const auto& r : ds.records) {
    w.push_back(preprocess(r));
    targets.push_back(w.back().glucose_mgdl);
  }
  ModelConfig mc;  // default full-size model
  mc.seed = 1;
  HybridModel model = build(mc);
  auto params = model.parameters();
  std::vector<AdamState> states;
  for (Tensor* p : params) states.emplace_back(p->numel(), AdamHyper{});
  Tensor target({w.size(), 1}, std::move(targets));

  double mse = std::numeric_limits<double>::infinity();
  std::size_t epochs = 0;
  for (std::size_t epoch = 1; epoch <= 2000; ++epoch) {
    // one full batch per epoch with a stepped learning rate
    const double lr = epoch <= 100 ? 0.02 : epoch <= 250 ? 0.005 : 0.001;
    for (auto& s : states) s.hyper.lr = lr;
    model.zero_grad();
    Tape tape;
    Tensor loss = mse_loss(&tape, model.forward(w, &tape, true), target);
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(*params[i], states[i]);
    mse = loss.at(0);
    epochs = epoch;
    if (mse <= 1.0) break;
  }
  return {mse <= 1.0, "train mse " + detail::fmt(mse, 4) + " after " +
                          std::to_string(epochs) + " epochs"};
}

std::pair<bool, std::string> crit_end_to_end() {
  auto ds = synth_generate(200, 42, 300.0, 10.0);
  std::vector<Window> w;
  for (const auto& r : ds.records) w.push_back(preprocess(r));
  const auto idx = split(w.size(), {}, detail::derive_seed(9, detail::kStreamSplit));
  std::vector<Window> tr, val, te;
  for (auto i : idx.train) tr.push_back(w[i]);
  for (auto i : idx.val) val.push_back(w[i]);
  for (auto i : idx.test) te.push_back(w[i]);

  ModelConfig mc;
  mc.cnn_a = {5, 8};
  mc.cnn_b = {11, 8};
  mc.gru_layers = {16, 8};
  mc.branch_fc = {16, 8, 8};
  mc.seed = detail::derive_seed(9, detail::kStreamInit);
  HybridModel model = build(mc);
  TrainConfig tc;
  tc.epochs_max = 200;
  tc.batch_size = 16;
  tc.patience = 60;
  tc.adam.lr = 0.005;
  tc.augment_copies = 0;
  tc.augment_sigmas = {};
  tc.seed = 9;
  train(model, tr, val, tc);

  std::vector<double> refs, preds = model.predict(te);
  for (const auto& x : te) refs.push_back(x.glucose_mgdl);
  const auto m = compute_metrics(refs, preds);
  const auto c = ceg_summary(refs, preds);
  const bool ok = m.mae_mgdl <= 5.0 && c.percents[0] >= 95.0;
  return {ok, "test MAE " + detail::fmt(m.mae_mgdl, 3) + " mg/dL, zone A " +
                  detail::fmt(c.percents[0], 1) + " %"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::pair<bool, std::string> crit_determinism(const fs::path& run_dir) {
  struct NullBuffer : std::streambuf {
    int overflow(int c) override { return c; }
  } null_buffer;
  std::ostream log(&null_buffer);

  RunConfig cfg;
  cfg.dataset_root = run_dir / "det_ds";
  cfg.quiet = true;
  cfg.seed = 13;
  cfg.synth_count = 20;
  cfg.synth_fs_hz = 300.0;
  cfg.model.cnn_a = {3, 4};
  cfg.model.cnn_b = {5, 4};
  cfg.model.gru_layers = {8, 6};
  cfg.model.branch_fc = {8, 6, 4};
  cfg.train.epochs_max = 3;
  cfg.train.batch_size = 4;
  cfg.train.patience = 3;
  cfg.train.augment_copies = 1;
  cfg.train.augment_sigmas = {0.02};
  cfg.kfolds = 2;
  {
    RunConfig gen = cfg;
    gen.out_dir = cfg.dataset_root;
    cmd_synth(gen, log);
  }

  cfg.out_dir = run_dir / "det_a";
  cmd_train(cfg, log);
  cmd_crossval(cfg, log);
  const std::string metrics_a = slurp(cfg.out_dir / "metrics.csv");
  const std::string folds_a = slurp(cfg.out_dir / "folds.csv");

  cfg.out_dir = run_dir / "det_b";
  cmd_train(cfg, log);
  cmd_crossval(cfg, log);
  const bool ok = metrics_a == slurp(cfg.out_dir / "metrics.csv") &&
                  folds_a == slurp(cfg.out_dir / "folds.csv");
  return {ok, ok ? "metrics.csv and folds.csv byte-identical" : "reruns differ"};
}

std::pair<bool, std::string> crit_real_dataset(const fs::path& data_dir,
                                               const fs::path& run_dir) {
  struct NullBuffer : std::streambuf {
    int overflow(int c) override { return c; }
  } null_buffer;
  std::ostream log(&null_buffer);

  const Dataset ds = load_dataset(data_dir);
  const auto hist = label_histogram(ds, {98.0, 138.0});
  const bool stats = ds.size() == 67 && hist.underflow == 7 && hist.overflow == 6;

  RunConfig cfg;  // full default configuration
  cfg.dataset_root = data_dir;
  cfg.out_dir = run_dir / "real_cv";
  cfg.quiet = true;
  cfg.seed = 1;
  cmd_crossval(cfg, log);
  std::istringstream folds(slurp(cfg.out_dir / "folds.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(folds, line);
  double mae_sum = 0.0;
  while (std::getline(folds, line)) {
    if (line.empty()) continue;
    ++rows;
    mae_sum += std::stod(detail::split_csv_row(line)[1]);
  }
  const double mean_mae = mae_sum / static_cast<double>(rows);
  // mean fold MAE <= 10 is a stretch target and does not gate
  return {stats && rows == 10,
          std::to_string(ds.size()) + " records, hist " + std::to_string(hist.underflow) +
              "/" + std::to_string(hist.overflow) + ", " + std::to_string(rows) +
              " folds, mean MAE " + detail::fmt(mean_mae, 3) + " mg/dL (stretch)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance harness"};
  std::string out_dir;
  std::string data_dir = "data/real";
  bool force_fail = false;
  app.add_option("--out", out_dir, "run directory (default: a fresh temp directory)");
  app.add_option("--data", data_dir, "real dataset root; criterion 11 skips when absent");
  app.add_flag("--force-fail", force_fail, "corrupt an oracle constant to test the harness");
  CLI11_PARSE(app, argc, argv);

  Harness h;
  h.run_dir = out_dir.empty() ? fs::temp_directory_path() / "ppgglu_acceptance"
                              : fs::path(out_dir);
  fs::create_directories(h.run_dir);
  h.data_dir = data_dir;
  h.force_fail = force_fail;

  h.run(1, "layer and full-model gradients vs finite differences",
        "rel err < 1e-4, < 60 s", crit_gradients);
  h.run(2, "conv1d and maxpool1d vs naive oracles on 100 random inputs",
        "exact match", [&] { return crit_kernel_oracles(h.force_fail); });
  h.run(3, "band-pass response: DC, 2 Hz and 20 Hz tones",
        "dc < 1%, 2 Hz within 5%, 20 Hz >= 20 dB", crit_filter_response);
  h.run(4, "resampler 21750@2175 Hz to 300@30 Hz", "len 300, bin 20, rmse < 1e-3",
        crit_resampler);
  h.run(5, "CEG zones vs region oracle on the full integer grid",
        "0 mismatches, < 30 s", crit_ceg_sweep);
  h.run(6, "metrics vs naive reference and trivial perfect case",
        "rel err < 1e-12", crit_metrics);
  h.run(7, "split/kfold partition properties for n in [3,500]",
        "exact partitions", crit_partitions);
  h.run(8, "default model overfits 16 synthetic windows",
        "mse <= 1.0 within 2000 epochs, < 5 min", crit_overfit);
  h.run(9, "end-to-end learning on 200 synthetic records",
        "test MAE <= 5 mg/dL, zone A >= 95%, < 15 min", crit_end_to_end);
  h.run(10, "train and crossval reruns are byte-identical",
        "identical metric CSVs", [&] { return crit_determinism(h.run_dir); });
  if (fs::exists(h.data_dir / "labels.csv"))
    h.run(11, "real dataset statistics and full default crossval",
          "67 records, hist 7/6, 10 fold rows",
          [&] { return crit_real_dataset(h.data_dir, h.run_dir); });
  else
    h.skip(11, "real dataset statistics and full default crossval",
           "67 records, hist 7/6, 10 fold rows", "dataset absent");

  const fs::path report = h.run_dir / "acceptance.md";
  h.write_markdown(report);
  std::cout << "report: " << report.string() << "\n";
  return h.all_passed() ? 0 : 1;
}
