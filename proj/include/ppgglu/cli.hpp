#ifndef PPGGLU_CLI_HPP
#define PPGGLU_CLI_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ppgglu/config.hpp"
#include "ppgglu/dataset.hpp"
#include "ppgglu/errors.hpp"
#include "ppgglu/metrics.hpp"
#include "ppgglu/model.hpp"
#include "ppgglu/signal.hpp"
#include "ppgglu/train.hpp"

namespace ppgglu {

// Merged view of config-file keys and command-line overrides. Every key
// has a default here; an unknown key in the file is an error.
struct RunConfig {
  std::filesystem::path dataset_root = "data";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  bool quiet = false;

  PreprocConfig preproc;
  ModelConfig model;
  TrainConfig train;
  SplitFractions fractions;
  std::vector<double> histogram_edges{98.0, 138.0};

  std::size_t kfolds = 10;
  std::size_t parallel_folds = 1;
  bool save_fold_models = false;

  std::size_t synth_count = 200;
  double synth_fs_hz = 2175.0;
  double synth_duration_s = 10.0;

  void apply(const std::map<std::string, std::string>& m) {
    for (const auto& [key, value] : m) {
      if (key == "dataset_root") dataset_root = value;
      else if (key == "out_dir") out_dir = value;
      else if (key == "seed") seed = static_cast<std::uint64_t>(kv::to_int(key, value));
      else if (key == "quiet") quiet = kv::to_int(key, value) != 0;
      else if (key == "filter_low_hz") preproc.filter.low_hz = kv::to_double(key, value);
      else if (key == "filter_high_hz") preproc.filter.high_hz = kv::to_double(key, value);
      else if (key == "filter_order") preproc.filter.order = static_cast<int>(kv::to_int(key, value));
      else if (key == "resample_hz") preproc.fs_out = kv::to_double(key, value);
      else if (key == "window_len") {
        preproc.window_len = static_cast<std::size_t>(kv::to_int(key, value));
        model.window_len = preproc.window_len;
      }
      else if (key == "cnn_a_kernel") model.cnn_a.kernel = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_a_filters") model.cnn_a.filters = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_b_kernel") model.cnn_b.kernel = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_b_filters") model.cnn_b.filters = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "gru_layers") model.gru_layers = kv::to_size_list(key, value);
      else if (key == "branch_fc") model.branch_fc = kv::to_size_list(key, value);
      else if (key == "epochs_max") train.epochs_max = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "batch_size") train.batch_size = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "patience") train.patience = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "learning_rate") train.adam.lr = kv::to_double(key, value);
      else if (key == "adam_beta1") train.adam.beta1 = kv::to_double(key, value);
      else if (key == "adam_beta2") train.adam.beta2 = kv::to_double(key, value);
      else if (key == "adam_epsilon") train.adam.epsilon = kv::to_double(key, value);
      else if (key == "augment_copies") train.augment_copies = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "augment_sigmas") train.augment_sigmas = kv::to_double_list(key, value);
      else if (key == "train_fraction") fractions.train = kv::to_double(key, value);
      else if (key == "val_fraction") fractions.val = kv::to_double(key, value);
      else if (key == "test_fraction") fractions.test = kv::to_double(key, value);
      else if (key == "histogram_edges") histogram_edges = kv::to_double_list(key, value);
      else if (key == "kfolds") kfolds = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "parallel_folds") parallel_folds = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "save_fold_models") save_fold_models = kv::to_int(key, value) != 0;
      else if (key == "synth_count") synth_count = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "synth_fs_hz") synth_fs_hz = kv::to_double(key, value);
      else if (key == "synth_duration_s") synth_duration_s = kv::to_double(key, value);
      else throw InvalidConfig("unknown key '" + key + "'");
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    apply(kv::parse(buf.str()));
  }
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Io("cannot write " + path.string());
  out << content;
}

inline std::string histogram_text(const Histogram& h) {
  std::string out = "label histogram (mg/dL)\n";
  out += "  < " + fmt(h.edges.front(), 0) + ": " + std::to_string(h.underflow) + "\n";
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i)
    out += "  [" + fmt(h.edges[i], 0) + ", " + fmt(h.edges[i + 1], 0) +
           "): " + std::to_string(h.counts[i]) + "\n";
  out += "  >= " + fmt(h.edges.back(), 0) + ": " + std::to_string(h.overflow) + "\n";
  return out;
}

inline std::vector<Window> preprocess_all(const Dataset& ds, const PreprocConfig& cfg) {
  std::vector<Window> windows;
  windows.reserve(ds.size());
  for (const auto& rec : ds.records) {
    try {
      windows.push_back(preprocess(rec, cfg));
    } catch (const Error& e) {
      throw InvalidInput("record '" + rec.record_id + "': " + e.what());
    }
  }
  return windows;
}

inline std::vector<Window> pick(const std::vector<Window>& windows,
                                const std::vector<std::size_t>& idx) {
  std::vector<Window> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(windows[i]);
  return out;
}

}  // namespace detail

inline void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  if (cfg.synth_count < 1) throw InvalidInput("synth: count must be >= 1");
  const Dataset ds =
      synth_generate(cfg.synth_count, cfg.seed, cfg.synth_fs_hz, cfg.synth_duration_s);
  save_dataset(ds, cfg.out_dir);
  if (!cfg.quiet)
    log << "wrote " << ds.size() << " synthetic records to " << cfg.out_dir.string()
        << "\n";
}

inline void cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
  const Dataset ds = load_dataset(cfg.dataset_root);
  const auto windows = detail::preprocess_all(ds, cfg.preproc);

  std::string csv = "record_id,glucose_mgdl";
  for (std::size_t i = 0; i < cfg.preproc.window_len; ++i)
    csv += ",v" + std::to_string(i + 1);
  csv += "\n";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    csv += ds.records[i].record_id + "," + detail::format_double(windows[i].glucose_mgdl);
    for (double v : windows[i].values) csv += "," + detail::format_double(v);
    csv += "\n";
  }
  detail::write_file(cfg.out_dir / "windows.csv", csv);

  if (!cfg.quiet) {
    log << "preprocessed " << windows.size() << " records\n";
    log << detail::histogram_text(label_histogram(ds, cfg.histogram_edges));
  }
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const Dataset ds = load_dataset(cfg.dataset_root);
  const auto windows = detail::preprocess_all(ds, cfg.preproc);

  const auto idx = split(windows.size(), cfg.fractions,
                         detail::derive_seed(cfg.seed, detail::kStreamSplit));
  auto train_w = detail::pick(windows, idx.train);
  const auto val_w = detail::pick(windows, idx.val);
  const auto test_w = detail::pick(windows, idx.test);
  train_w = augment_gaussian(train_w, cfg.train.augment_copies, cfg.train.augment_sigmas,
                             detail::derive_seed(cfg.seed, detail::kStreamAugment));

  ModelConfig model_cfg = cfg.model;
  model_cfg.seed = detail::derive_seed(cfg.seed, detail::kStreamInit);
  HybridModel model = build(model_cfg);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  const TrainHistory history = train(model, train_w, val_w, train_cfg);

  std::vector<double> refs, preds = model.predict(test_w);
  for (const auto& w : test_w) refs.push_back(w.glucose_mgdl);
  const MetricsReport metrics = compute_metrics(refs, preds);
  const CegSummary ceg = ceg_summary(refs, preds);

  std::filesystem::create_directories(cfg.out_dir);
  model.save(cfg.out_dir / "model.bin");
  detail::write_file(cfg.out_dir / "history.csv", history_csv(history));
  detail::write_file(cfg.out_dir / "metrics.csv",
                     render_report(&metrics, nullptr, nullptr, ReportFormat::csv));
  detail::write_file(cfg.out_dir / "ceg.csv",
                     render_report(nullptr, &ceg, nullptr, ReportFormat::csv));
  detail::write_file(cfg.out_dir / "ceg.svg", ceg_svg(ceg));

  if (!cfg.quiet) {
    log << "trained " << history.train_mse.size() << " epochs (best epoch "
        << history.best_epoch + 1 << ")\n";
    log << render_report(&metrics, nullptr, nullptr, ReportFormat::text);
  }
}

inline void cmd_crossval(const RunConfig& cfg, std::ostream& log) {
  const Dataset ds = load_dataset(cfg.dataset_root);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  const std::filesystem::path model_dir =
      cfg.save_fold_models ? cfg.out_dir / "models" : std::filesystem::path{};
  if (!model_dir.empty()) std::filesystem::create_directories(model_dir);
  const auto results = cross_validate(ds, cfg.model, train_cfg, cfg.kfolds, cfg.preproc,
                                      model_dir, cfg.parallel_folds);
  const auto rows = fold_rows(results);
  detail::write_file(cfg.out_dir / "folds.csv",
                     render_report(nullptr, nullptr, &rows, ReportFormat::csv));
  if (!cfg.quiet) log << render_report(nullptr, nullptr, &rows, ReportFormat::text);
}

inline void cmd_ceg(const RunConfig& cfg, const std::filesystem::path& predictions_csv,
                    std::ostream& log) {
  std::ifstream in(predictions_csv);
  if (!in) throw MissingFile(predictions_csv.string());
  std::string line;
  if (!std::getline(in, line) || kv::trim(line) != "ref_mgdl,pred_mgdl")
    throw MalformedCsv(predictions_csv.string() + ": expected header ref_mgdl,pred_mgdl");
  std::vector<double> refs, preds;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (kv::trim(line).empty()) continue;
    const auto cells = detail::split_csv_row(line);
    const std::string where = predictions_csv.string() + " row " + std::to_string(row);
    if (cells.size() != 2) throw MalformedCsv(where + ": expected 2 columns");
    refs.push_back(detail::parse_double(cells[0], where));
    preds.push_back(detail::parse_double(cells[1], where));
  }
  if (refs.empty()) throw MalformedCsv(predictions_csv.string() + ": no data rows");

  const CegSummary ceg = ceg_summary(refs, preds);
  detail::write_file(cfg.out_dir / "ceg.csv",
                     render_report(nullptr, &ceg, nullptr, ReportFormat::csv));
  detail::write_file(cfg.out_dir / "ceg.svg", ceg_svg(ceg));
  if (!cfg.quiet) log << render_report(nullptr, &ceg, nullptr, ReportFormat::text);
}

// 0 success, 2 input/config error, 3 runtime/numeric error
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NonFiniteLoss*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;
  return 3;
}

}  // namespace ppgglu

#endif  // PPGGLU_CLI_HPP
