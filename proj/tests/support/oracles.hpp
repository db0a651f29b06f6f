#ifndef PPGGLU_TESTS_ORACLES_HPP
#define PPGGLU_TESTS_ORACLES_HPP

#include <cmath>
#include <cstddef>
#include <vector>

// Naive reference implementations used only by tests. Everything here is
// written as directly as possible and shares no code with the library path
// it checks.
namespace oracle {

// plain quintuple-loop cross-correlation with zero same-padding
inline std::vector<double> conv1d(const std::vector<double>& x, std::size_t cin,
                                  std::size_t len, const std::vector<double>& k,
                                  std::size_t cout, std::size_t kw,
                                  const std::vector<double>& bias) {
  std::vector<double> y(cout * len, 0.0);
  const long pad = static_cast<long>((kw - 1) / 2);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t t = 0; t < len; ++t) {
      double acc = bias[co];
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t j = 0; j < kw; ++j) {
          const long s = static_cast<long>(t) + static_cast<long>(j) - pad;
          if (s >= 0 && s < static_cast<long>(len))
            acc += k[(co * cin + ci) * kw + j] * x[ci * len + static_cast<std::size_t>(s)];
        }
      y[co * len + t] = acc;
    }
  return y;
}

inline std::vector<double> maxpool1d(const std::vector<double>& x, std::size_t ch,
                                     std::size_t len) {
  const std::size_t olen = len / 2;
  std::vector<double> y(ch * olen);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < olen; ++t) {
      const double a = x[c * len + 2 * t];
      const double b = x[c * len + 2 * t + 1];
      y[c * olen + t] = a >= b ? a : b;
    }
  return y;
}

// analog Butterworth band-pass magnitude response:
// |H(jf)|^2 = 1 / (1 + nu^(2n)),  nu = (f^2 - lo*hi) / (f * (hi - lo))
inline double butter_bandpass_mag(double f_hz, double lo, double hi, int order) {
  const double nu = (f_hz * f_hz - lo * hi) / (f_hz * (hi - lo));
  return 1.0 / std::sqrt(1.0 + std::pow(nu * nu, order));
}

// two-pass reference metrics
struct Metrics {
  double mae, mse, rmse, mape, r2;
};

inline Metrics metrics(const std::vector<double>& refs,
                       const std::vector<double>& preds) {
  const double n = static_cast<double>(refs.size());
  double mean_ref = 0.0;
  for (double r : refs) mean_ref += r;
  mean_ref /= n;
  Metrics m{0, 0, 0, 0, 0};
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double e = preds[i] - refs[i];
    m.mae += std::fabs(e);
    m.mse += e * e;
    m.mape += std::fabs(e / refs[i]);
    ss_tot += (refs[i] - mean_ref) * (refs[i] - mean_ref);
  }
  const double ss_res = m.mse;
  m.mae /= n;
  m.mse /= n;
  m.rmse = std::sqrt(m.mse);
  m.mape = 100.0 * m.mape / n;
  m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

// Clarke Error Grid region oracle. Independently coded from the published
// zone definitions: every zone's region test is evaluated, and the caller
// asserts exactly one fires after precedence is applied.
enum class Zone { A, B, C, D, E };

inline bool in_a(double ref, double pred) {
  return (ref <= 70.0 && pred <= 70.0) || std::fabs(pred - ref) <= 0.2 * ref;
}
inline bool in_e(double ref, double pred) {
  return (ref >= 180.0 && pred <= 70.0) || (ref <= 70.0 && pred >= 180.0);
}
inline bool in_c(double ref, double pred) {
  return (ref >= 70.0 && ref <= 290.0 && pred >= ref + 110.0) ||
         (ref >= 130.0 && ref <= 180.0 && pred <= (7.0 / 5.0) * ref - 182.0);
}
inline bool in_d(double ref, double pred) {
  return (ref >= 240.0 && pred >= 70.0 && pred <= 180.0) ||
         (ref <= 175.0 / 3.0 && pred >= 70.0 && pred <= 180.0) ||
         (ref >= 175.0 / 3.0 && ref <= 70.0 && pred >= (6.0 / 5.0) * ref);
}

inline Zone ceg_zone(double ref, double pred) {
  if (in_a(ref, pred)) return Zone::A;
  if (in_e(ref, pred)) return Zone::E;
  if (in_c(ref, pred)) return Zone::C;
  if (in_d(ref, pred)) return Zone::D;
  return Zone::B;
}

}  // namespace oracle

#endif  // PPGGLU_TESTS_ORACLES_HPP
