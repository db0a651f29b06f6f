#ifndef PPGGLU_DATASET_HPP
#define PPGGLU_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ppgglu/errors.hpp"
#include "ppgglu/rng.hpp"
#include "ppgglu/signal.hpp"

namespace ppgglu {

struct LabelStats {
  double min = 0.0, max = 0.0, mean = 0.0;
};

struct Dataset {
  std::vector<PpgRecord> records;
  LabelStats label_stats;

  std::size_t size() const { return records.size(); }
};

inline LabelStats compute_label_stats(const std::vector<PpgRecord>& records) {
  LabelStats s;
  if (records.empty()) return s;
  s.min = s.max = records[0].glucose_mgdl;
  for (const auto& r : records) {
    s.min = std::min(s.min, r.glucose_mgdl);
    s.max = std::max(s.max, r.glucose_mgdl);
    s.mean += r.glucose_mgdl;
  }
  s.mean /= static_cast<double>(records.size());
  return s;
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw MalformedCsv(context + ": cannot parse number '" + s + "'");
  }
}

// fixed formatting so regenerated files are byte-identical
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Directory layout: labels.csv with header record_id,subject_id,glucose_mgdl,fs_hz
// and signals/<record_id>.csv holding one decimal sample per line.
inline Dataset load_dataset(const std::filesystem::path& root) {
  const auto labels_path = root / "labels.csv";
  std::ifstream labels(labels_path);
  if (!labels) throw MissingFile(labels_path.string());

  Dataset ds;
  std::string line;
  std::size_t row = 0;
  std::set<std::string> seen_ids;
  while (std::getline(labels, line)) {
    ++row;
    if (line.empty() || (row == 1 && line.rfind("record_id", 0) == 0)) continue;
    const auto fields = detail::split_csv_row(line);
    const std::string where = labels_path.string() + " row " + std::to_string(row);
    if (fields.size() != 4)
      throw MalformedCsv(where + ": expected 4 fields, got " +
                         std::to_string(fields.size()));
    PpgRecord rec;
    rec.record_id = fields[0];
    rec.subject_id = fields[1];
    rec.glucose_mgdl = detail::parse_double(fields[2], where);
    rec.fs = detail::parse_double(fields[3], where);
    if (rec.record_id.empty()) throw MalformedCsv(where + ": empty record_id");
    if (!seen_ids.insert(rec.record_id).second)
      throw MalformedCsv(where + ": duplicate record_id '" + rec.record_id + "'");
    if (!(rec.glucose_mgdl > 20.0 && rec.glucose_mgdl < 600.0))
      throw LabelOutOfRange(where + ": glucose " +
                            std::to_string(rec.glucose_mgdl) + " mg/dL");

    const auto sig_path = root / "signals" / (rec.record_id + ".csv");
    std::ifstream sig(sig_path);
    if (!sig) throw MissingFile("record '" + rec.record_id + "': " + sig_path.string());
    std::string sample_line;
    std::size_t sample_row = 0;
    while (std::getline(sig, sample_line)) {
      ++sample_row;
      if (!sample_line.empty() && sample_line.back() == '\r') sample_line.pop_back();
      if (sample_line.empty()) continue;
      rec.samples.push_back(detail::parse_double(
          sample_line, sig_path.string() + " row " + std::to_string(sample_row)));
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) throw MalformedCsv(labels_path.string() + ": no data rows");
  ds.label_stats = compute_label_stats(ds.records);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root / "signals", ec);
  if (ec) throw Io("cannot create " + (root / "signals").string());
  std::ofstream labels(root / "labels.csv", std::ios::binary);
  if (!labels) throw Io("cannot write " + (root / "labels.csv").string());
  labels << "record_id,subject_id,glucose_mgdl,fs_hz\n";
  for (const auto& r : ds.records) {
    labels << r.record_id << ',' << r.subject_id << ','
           << detail::format_double(r.glucose_mgdl) << ','
           << detail::format_double(r.fs) << '\n';
    std::ofstream sig(root / "signals" / (r.record_id + ".csv"), std::ios::binary);
    if (!sig) throw Io("cannot write signal for " + r.record_id);
    for (double v : r.samples) sig << detail::format_double(v) << '\n';
  }
}

// ---------------------------------------------------------------------------
// histogram
// ---------------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;
  std::size_t underflow = 0;
  std::vector<std::size_t> counts;  // half-open bins [edges[i], edges[i+1])
  std::size_t overflow = 0;
};

inline Histogram label_histogram(const Dataset& ds, const std::vector<double>& edges) {
  if (edges.size() < 2) throw InvalidBins("need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      throw InvalidBins("edges must be strictly increasing");
  Histogram h;
  h.edges = edges;
  h.counts.assign(edges.size() - 1, 0);
  for (const auto& r : ds.records) {
    const double v = r.glucose_mgdl;
    if (v < edges.front()) {
      ++h.underflow;
    } else if (v >= edges.back()) {
      ++h.overflow;
    } else {
      const auto it = std::upper_bound(edges.begin(), edges.end(), v);
      h.counts[static_cast<std::size_t>(it - edges.begin()) - 1]++;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// shuffling / splitting
// ---------------------------------------------------------------------------

inline std::vector<std::size_t> shuffle(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("shuffle: n must be >= 1");
  return random_permutation(n, seed);
}

struct SplitFractions {
  double train = 0.70, val = 0.15, test = 0.15;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

inline SplitIndices split(std::size_t n, SplitFractions f, std::uint64_t seed) {
  if (n < 3) throw TooFewSamples("split: n=" + std::to_string(n) + " < 3");
  if (std::fabs(f.train + f.val + f.test - 1.0) > 1e-9 || f.train < 0 || f.val < 0 ||
      f.test < 0)
    throw InvalidInput("split: fractions must be non-negative and sum to 1");
  const auto perm = random_permutation(n, seed);
  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(f.train * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(f.val * static_cast<double>(n)));
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

struct FoldPlan {
  // folds[i] is fold i's test-index list; train+val pool is everything else
  std::vector<std::vector<std::size_t>> folds;
};

inline FoldPlan kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n < k) throw TooFewSamples("kfold: n=" + std::to_string(n) + " < k=" +
                                 std::to_string(k));
  if (k < 2) throw InvalidInput("kfold: k must be >= 2");
  const auto perm = random_permutation(n, seed);
  FoldPlan plan;
  plan.folds.resize(k);
  // first n % k folds take the extra element
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t size = n / k + (i < n % k ? 1 : 0);
    plan.folds[i].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                         perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// synthetic records
// ---------------------------------------------------------------------------

struct SynthParams {
  double hr_bpm;
  double amplitude_ratio;
};

inline double synth_label(const SynthParams& p) {
  return 70.0 + 0.5 * p.hr_bpm + 60.0 * p.amplitude_ratio;
}

inline std::vector<SynthParams> synth_draw_params(std::size_t count,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SynthParams> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SynthParams p;
    p.hr_bpm = rng.uniform(50.0, 110.0);
    p.amplitude_ratio = rng.uniform(0.3, 0.7);
    out.push_back(p);
  }
  return out;
}

// Per cycle: a systolic Gaussian peak plus a smaller dicrotic Gaussian,
// with 1% additive noise. The label is a fixed function of the waveform
// parameters so a model can actually learn it.
inline PpgRecord synth_record(const SynthParams& p, std::size_t index, Rng& noise_rng,
                              double fs = 2175.0, double duration_s = 10.0) {
  PpgRecord rec;
  rec.fs = fs;
  rec.glucose_mgdl = synth_label(p);
  rec.subject_id = "synthetic";
  char id[32];
  std::snprintf(id, sizeof id, "synth%04zu", index);
  rec.record_id = id;

  const double period = 60.0 / p.hr_bpm;
  const std::size_t n = static_cast<std::size_t>(fs * duration_s);
  rec.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double tau = std::fmod(t, period);
    double v = 0.0;
    // adjacent cycles contribute through the Gaussian tails
    for (int cycle = -1; cycle <= 1; ++cycle) {
      const double tc = tau - static_cast<double>(cycle) * period;
      const double d1 = (tc - 0.30 * period) / (0.10 * period);
      const double d2 = (tc - 0.65 * period) / (0.12 * period);
      v += std::exp(-0.5 * d1 * d1) + p.amplitude_ratio * std::exp(-0.5 * d2 * d2);
    }
    v += 0.01 * noise_rng.gaussian();
    rec.samples.push_back(v);
  }
  return rec;
}

inline Dataset synth_generate(std::size_t count, std::uint64_t seed,
                              double fs = 2175.0, double duration_s = 10.0) {
  if (count < 1) throw InvalidInput("synth_generate: count must be >= 1");
  const auto params = synth_draw_params(count, seed);
  Rng noise_rng(Rng::splitmix64(seed += 0x6a09e667f3bcc909ULL));
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i)
    ds.records.push_back(synth_record(params[i], i, noise_rng, fs, duration_s));
  ds.label_stats = compute_label_stats(ds.records);
  return ds;
}

}  // namespace ppgglu

#endif  // PPGGLU_DATASET_HPP
