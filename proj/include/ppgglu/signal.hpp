#ifndef PPGGLU_SIGNAL_HPP
#define PPGGLU_SIGNAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ppgglu/errors.hpp"
#include "ppgglu/rng.hpp"

namespace ppgglu {

struct PpgRecord {
  std::vector<double> samples;  // raw sensor units
  double fs = 0.0;              // Hz
  double glucose_mgdl = 0.0;    // reference label
  std::string subject_id;
  std::string record_id;
};

inline void validate_record(const PpgRecord& r) {
  if (r.fs <= 0.0) throw InvalidRate("record " + r.record_id + ": fs must be > 0");
  if (static_cast<double>(r.samples.size()) < 2.0 * r.fs)
    throw SignalTooShort("record " + r.record_id + ": needs at least 2 s of signal");
  if (!(r.glucose_mgdl > 20.0 && r.glucose_mgdl < 600.0))
    throw LabelOutOfRange("record " + r.record_id + ": glucose " +
                          std::to_string(r.glucose_mgdl) + " mg/dL outside (20, 600)");
}

struct Window {
  std::vector<double> values;  // normalized to [0, 1]
  double glucose_mgdl = 0.0;
  std::string provenance;  // record_id, plus an augmentation tag for copies
};

struct FilterSpec {
  double low_hz = 0.5;
  double high_hz = 8.0;
  int order = 4;  // analog prototype order; band-pass doubles the pole count
};

namespace detail {

struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator (a0 == 1)
};

// transposed direct form II, initial state matching the steady-state
// response to a step of height x0 so constant inputs produce no transient
inline void biquad_filter(const Biquad& q, std::vector<double>& x) {
  const double hdc = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  const double x0 = x.empty() ? 0.0 : x.front();
  double s1 = (q.b1 + q.b2 - (q.a1 + q.a2) * hdc) * x0;
  double s2 = (q.b2 - q.a2 * hdc) * x0;
  for (double& v : x) {
    const double y = q.b0 * v + s1;
    s1 = q.b1 * v - q.a1 * y + s2;
    s2 = q.b2 * v - q.a2 * y;
    v = y;
  }
}

inline std::complex<double> biquad_response(const Biquad& q, double omega) {
  const std::complex<double> z1 = std::exp(std::complex<double>(0.0, -omega));
  const std::complex<double> z2 = z1 * z1;
  return (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
}

// Butterworth band-pass as a biquad cascade: analog prototype poles,
// low-pass-to-band-pass transform, bilinear transform with prewarped edges,
// unit gain pinned at the geometric center frequency.
inline std::vector<Biquad> design_bandpass(const FilterSpec& spec, double fs) {
  using cd = std::complex<double>;
  const int n = spec.order;
  const double k = 2.0 * fs;  // bilinear constant
  const double w_lo = k * std::tan(M_PI * spec.low_hz / fs);
  const double w_hi = k * std::tan(M_PI * spec.high_hz / fs);
  const double w0sq = w_lo * w_hi;
  const double bw = w_hi - w_lo;

  // analog band-pass poles (2n of them)
  std::vector<cd> spoles;
  for (int i = 1; i <= n; ++i) {
    const double theta = M_PI * (2.0 * i + n - 1.0) / (2.0 * n);
    const cd proto(std::cos(theta), std::sin(theta));
    const cd bp = bw * proto;
    const cd disc = std::sqrt(bp * bp - 4.0 * w0sq);
    spoles.push_back((bp + disc) / 2.0);
    spoles.push_back((bp - disc) / 2.0);
  }

  // bilinear transform; zeros land at z = +1 (n of them) and z = -1 (n)
  std::vector<cd> zpoles;
  for (const cd& s : spoles) zpoles.push_back((k + s) / (k - s));

  // pair poles into real-coefficient sections: conjugates together,
  // leftover real poles in pairs
  std::vector<Biquad> sections;
  std::vector<bool> used(zpoles.size(), false);
  constexpr double tol = 1e-9;
  for (std::size_t i = 0; i < zpoles.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    std::size_t mate = zpoles.size();
    for (std::size_t j = i + 1; j < zpoles.size(); ++j) {
      if (used[j]) continue;
      const bool conj_pair = std::abs(zpoles[j] - std::conj(zpoles[i])) < tol *
                                 (1.0 + std::abs(zpoles[i]));
      const bool both_real = std::fabs(zpoles[i].imag()) < tol &&
                             std::fabs(zpoles[j].imag()) < tol;
      if (conj_pair || both_real) {
        mate = j;
        break;
      }
    }
    if (mate == zpoles.size())
      throw InvalidInput("bandpass design: unpaired pole");
    used[mate] = true;
    const cd sum = zpoles[i] + zpoles[mate];
    const cd prod = zpoles[i] * zpoles[mate];
    // numerator (1 - z^-2): one zero at +1, one at -1 per section
    sections.push_back({1.0, 0.0, -1.0, -sum.real(), prod.real()});
  }

  // pin unit gain at the geometric center of the pass band
  const double wc = 2.0 * M_PI * std::sqrt(spec.low_hz * spec.high_hz) / fs;
  cd h(1.0, 0.0);
  for (const auto& q : sections) h *= biquad_response(q, wc);
  const double g = 1.0 / std::abs(h);
  sections.front().b0 *= g;
  sections.front().b1 *= g;
  sections.front().b2 *= g;
  return sections;
}

}  // namespace detail

// Zero-phase band-pass: forward pass, backward pass, with odd-reflection
// edge extension long enough for the low-frequency edge to settle.
inline std::vector<double> bandpass_filter(const std::vector<double>& signal,
                                           double fs, const FilterSpec& spec = {}) {
  if (fs <= 2.0 * spec.high_hz)
    throw NyquistViolation("fs " + std::to_string(fs) + " Hz <= 2 * " +
                           std::to_string(spec.high_hz) + " Hz");
  if (signal.size() <= static_cast<std::size_t>(3 * spec.order))
    throw SignalTooShort("bandpass_filter: " + std::to_string(signal.size()) +
                         " samples");

  const std::size_t n = signal.size();
  const std::size_t pad =
      std::min(n - 1, static_cast<std::size_t>(3.0 * fs / spec.low_hz));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i)
    ext.push_back(2.0 * signal.front() - signal[pad - i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 0; i < pad; ++i)
    ext.push_back(2.0 * signal.back() - signal[n - 2 - i]);

  const auto sections = detail::design_bandpass(spec, fs);
  for (const auto& q : sections) detail::biquad_filter(q, ext);
  std::reverse(ext.begin(), ext.end());
  for (const auto& q : sections) detail::biquad_filter(q, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

// single-pass magnitude of the designed digital filter at f_hz; the
// zero-phase application squares this
inline double bandpass_gain(double f_hz, double fs, const FilterSpec& spec = {}) {
  const auto sections = detail::design_bandpass(spec, fs);
  std::complex<double> h(1.0, 0.0);
  for (const auto& q : sections)
    h *= detail::biquad_response(q, 2.0 * M_PI * f_hz / fs);
  return std::abs(h);
}

// Linear-interpolation resampler; sample k of the output is the input
// evaluated at time k / fs_out. Output length floor(n * fs_out / fs_in).
inline std::vector<double> resample(const std::vector<double>& signal, double fs_in,
                                    double fs_out) {
  if (fs_in <= 0.0 || fs_out <= 0.0)
    throw InvalidRate("resample: rates must be positive");
  if (signal.empty()) return {};
  const std::size_t n = signal.size();
  const std::size_t out_len = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * fs_out / fs_in));
  std::vector<double> out(out_len);
  const double step = fs_in / fs_out;
  for (std::size_t k = 0; k < out_len; ++k) {
    const double t = static_cast<double>(k) * step;
    std::size_t i = static_cast<std::size_t>(t);
    if (i >= n - 1) {
      out[k] = signal[n - 1];
      continue;
    }
    const double frac = t - static_cast<double>(i);
    out[k] = signal[i] + frac * (signal[i + 1] - signal[i]);
  }
  return out;
}

// min-max scaling to [0, 1]
inline std::vector<double> normalize(const std::vector<double>& signal) {
  if (signal.empty()) throw EmptyInput("normalize: empty signal");
  const auto [mn_it, mx_it] = std::minmax_element(signal.begin(), signal.end());
  const double mn = *mn_it, mx = *mx_it;
  // the tolerance catches constants that picked up rounding noise upstream
  if (mx - mn <= 1e-12 * std::max({1.0, std::fabs(mx), std::fabs(mn)}))
    throw DegenerateSignal("normalize: all samples equal");
  std::vector<double> out(signal.size());
  const double inv = 1.0 / (mx - mn);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (signal[i] - mn) * inv;
  return out;
}

// longer signals center-truncated, shorter ones padded by replicating the
// last value
inline std::vector<double> fix_length(const std::vector<double>& signal,
                                      std::size_t window_len) {
  if (signal.empty()) throw EmptyInput("fix_length: empty signal");
  if (signal.size() == window_len) return signal;
  if (signal.size() > window_len) {
    const std::size_t start = (signal.size() - window_len) / 2;
    return std::vector<double>(signal.begin() + static_cast<std::ptrdiff_t>(start),
                               signal.begin() + static_cast<std::ptrdiff_t>(start + window_len));
  }
  std::vector<double> out = signal;
  out.resize(window_len, signal.back());
  return out;
}

struct PreprocConfig {
  FilterSpec filter;
  double fs_out = 30.0;
  std::size_t window_len = 300;
};

// band-pass -> resample -> fix length -> normalize, label carried through
inline Window preprocess(const PpgRecord& record, const PreprocConfig& cfg = {}) {
  validate_record(record);
  auto filtered = bandpass_filter(record.samples, record.fs, cfg.filter);
  auto low = resample(filtered, record.fs, cfg.fs_out);
  auto fixed = fix_length(low, cfg.window_len);
  Window w;
  w.values = normalize(fixed);
  w.glucose_mgdl = record.glucose_mgdl;
  w.provenance = record.record_id;
  return w;
}

// Training-set augmentation: for each sigma, one noisy copy of every window
// (zero-mean Gaussian, std = sigma * std(window)), re-normalized to [0, 1].
// Originals come first; output size is windows.size() * (1 + sigmas.size()).
inline std::vector<Window> augment_gaussian(const std::vector<Window>& windows,
                                            const std::vector<double>& sigmas,
                                            std::uint64_t seed) {
  if (windows.empty()) throw EmptyInput("augment_gaussian: no windows");
  for (double s : sigmas)
    if (s <= 0.0) throw InvalidSigma("augment_gaussian: sigma " + std::to_string(s));

  std::vector<Window> out = windows;
  out.reserve(windows.size() * (1 + sigmas.size()));
  Rng rng(seed);
  for (std::size_t j = 0; j < sigmas.size(); ++j) {
    for (const Window& w : windows) {
      double mean = 0.0;
      for (double v : w.values) mean += v;
      mean /= static_cast<double>(w.values.size());
      double var = 0.0;
      for (double v : w.values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(w.values.size());
      const double noise_std = sigmas[j] * std::sqrt(var);

      Window copy;
      copy.glucose_mgdl = w.glucose_mgdl;
      copy.provenance = w.provenance + "#aug" + std::to_string(j);
      copy.values.reserve(w.values.size());
      for (double v : w.values) copy.values.push_back(v + noise_std * rng.gaussian());
      copy.values = normalize(copy.values);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

// copies is redundant with sigmas.size(); accepting both keeps config files
// honest about what they request
inline std::vector<Window> augment_gaussian(const std::vector<Window>& windows,
                                            std::size_t copies,
                                            const std::vector<double>& sigmas,
                                            std::uint64_t seed) {
  if (copies != sigmas.size())
    throw InvalidInput("augment_gaussian: copies " + std::to_string(copies) +
                       " != " + std::to_string(sigmas.size()) + " sigmas");
  return augment_gaussian(windows, sigmas, seed);
}

}  // namespace ppgglu

#endif  // PPGGLU_SIGNAL_HPP
