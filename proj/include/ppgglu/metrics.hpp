#ifndef PPGGLU_METRICS_HPP
#define PPGGLU_METRICS_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppgglu/errors.hpp"

namespace ppgglu {

// ---------------------------------------------------------------------------
// regression metrics
// ---------------------------------------------------------------------------

struct MetricsReport {
  double mae_mgdl = 0.0;
  double mse_mgdl2 = 0.0;  // squared unit
  double rmse_mgdl = 0.0;
  double mape_percent = 0.0;

  // R^2 is undefined on constant references; an absent value throws rather
  // than leaking a NaN into comparison tables
  std::optional<double> r2_value;
  double r2() const {
    if (!r2_value) throw ConstantReference("R^2 undefined: references are constant");
    return *r2_value;
  }
};

inline MetricsReport compute_metrics(const std::vector<double>& refs,
                                     const std::vector<double>& preds) {
  if (refs.empty()) throw EmptyInput("compute_metrics: no points");
  if (refs.size() != preds.size())
    throw ShapeMismatch("compute_metrics: " + std::to_string(refs.size()) +
                        " refs vs " + std::to_string(preds.size()) + " preds");
  const double n = static_cast<double>(refs.size());
  double mean_ref = 0.0;
  for (double r : refs) {
    if (r <= 0.0) throw ZeroReference("compute_metrics: reference " +
                                      std::to_string(r) + " makes MAPE undefined");
    mean_ref += r;
  }
  mean_ref /= n;

  MetricsReport m;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double e = preds[i] - refs[i];
    m.mae_mgdl += std::fabs(e);
    m.mse_mgdl2 += e * e;
    m.mape_percent += std::fabs(e / refs[i]);
    ss_tot += (refs[i] - mean_ref) * (refs[i] - mean_ref);
  }
  const double ss_res = m.mse_mgdl2;
  m.mae_mgdl /= n;
  m.mse_mgdl2 /= n;
  m.rmse_mgdl = std::sqrt(m.mse_mgdl2);
  m.mape_percent = 100.0 * m.mape_percent / n;
  if (ss_tot > 0.0) m.r2_value = 1.0 - ss_res / ss_tot;
  return m;
}

// ---------------------------------------------------------------------------
// Clarke Error Grid
// ---------------------------------------------------------------------------

enum class CegZone { A, B, C, D, E };

inline char zone_letter(CegZone z) { return "ABCDE"[static_cast<int>(z)]; }

// Piecewise zone rules of the standard reference grid, evaluated in the
// order A, E, C, D with B as the remainder; boundary ties resolve to the
// earlier rule.
inline CegZone ceg_zone(double ref, double pred) {
  if (!(ref > 0.0 && ref <= 600.0) || !(pred > 0.0 && pred <= 600.0))
    throw OutOfPhysiologicalRange("ceg_zone: (" + std::to_string(ref) + ", " +
                                  std::to_string(pred) + ") outside (0, 600]");
  // A: within +-20% of the reference, or both readings hypoglycemic
  if ((ref <= 70.0 && pred <= 70.0) || std::fabs(pred - ref) <= 0.2 * ref)
    return CegZone::A;
  // E: opposite treatment corners
  if ((ref >= 180.0 && pred <= 70.0) || (ref <= 70.0 && pred >= 180.0))
    return CegZone::E;
  // C: overcorrection regions
  if ((ref >= 70.0 && ref <= 290.0 && pred >= ref + 110.0) ||
      (ref >= 130.0 && ref <= 180.0 && pred <= (7.0 / 5.0) * ref - 182.0))
    return CegZone::C;
  // D: dangerous failure to detect
  if ((ref >= 240.0 && pred >= 70.0 && pred <= 180.0) ||
      (ref <= 175.0 / 3.0 && pred >= 70.0 && pred <= 180.0) ||
      (ref >= 175.0 / 3.0 && ref <= 70.0 && pred >= (6.0 / 5.0) * ref))
    return CegZone::D;
  return CegZone::B;
}

struct CegSummary {
  std::array<std::size_t, 5> counts{};  // indexed by CegZone
  std::array<double, 5> percents{};
  std::size_t n = 0;
  std::vector<std::pair<double, double>> points;  // (ref, pred), for plots
};

inline CegSummary ceg_summary(const std::vector<double>& refs,
                              const std::vector<double>& preds) {
  if (refs.empty()) throw EmptyInput("ceg_summary: no points");
  if (refs.size() != preds.size())
    throw ShapeMismatch("ceg_summary: " + std::to_string(refs.size()) + " refs vs " +
                        std::to_string(preds.size()) + " preds");
  CegSummary s;
  s.n = refs.size();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    s.counts[static_cast<int>(ceg_zone(refs[i], preds[i]))]++;
    s.points.emplace_back(refs[i], preds[i]);
  }
  for (int z = 0; z < 5; ++z)
    s.percents[z] = 100.0 * static_cast<double>(s.counts[z]) /
                    static_cast<double>(s.n);
  return s;
}

// ---------------------------------------------------------------------------
// report rendering
// ---------------------------------------------------------------------------

struct FoldRow {
  std::size_t fold = 0;  // 1-based, as reported
  double mae_mgdl = 0.0;
  double rmse_mgdl = 0.0;
};

enum class ReportFormat { csv, text, svg };

namespace detail {

inline std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string metrics_csv(const MetricsReport& m) {
  return "mae_mgdl,mape_pct,r2,rmse_mgdl\n" + fmt(m.mae_mgdl) + "," +
         fmt(m.mape_percent) + "," + (m.r2_value ? fmt(*m.r2_value) : "undefined") +
         "," + fmt(m.rmse_mgdl) + "\n";
}

// four labeled lines in the headline order MAE, MAPE, R^2, RMSE
inline std::string metrics_text(const MetricsReport& m) {
  return "MAE:  " + fmt(m.mae_mgdl) + " mg/dL\n" +
         "MAPE: " + fmt(m.mape_percent) + " %\n" +
         "R2:   " + (m.r2_value ? fmt(*m.r2_value) : "undefined") + "\n" +
         "RMSE: " + fmt(m.rmse_mgdl) + " mg/dL\n";
}

inline std::string ceg_csv(const CegSummary& s) {
  std::string out = "zone,count,percent\n";
  for (int z = 0; z < 5; ++z) {
    out += std::string(1, "ABCDE"[z]) + "," + std::to_string(s.counts[z]) + "," +
           fmt(s.percents[z], 1) + "\n";
  }
  return out;
}

inline std::string ceg_text(const CegSummary& s) {
  std::string out = "Clarke Error Grid zones (" + std::to_string(s.n) + " points)\n";
  for (int z = 0; z < 5; ++z)
    out += std::string("  zone ") + "ABCDE"[z] + ": " + std::to_string(s.counts[z]) +
           " (" + fmt(s.percents[z], 1) + " %)\n";
  return out;
}

inline std::string folds_csv(const std::vector<FoldRow>& rows) {
  std::string out = "fold,mae,rmse\n";
  for (const auto& r : rows)
    out += std::to_string(r.fold) + "," + fmt(r.mae_mgdl) + "," +
           fmt(r.rmse_mgdl) + "\n";
  return out;
}

inline std::string folds_text(const std::vector<FoldRow>& rows) {
  if (rows.empty()) return "";
  std::size_t best_mae = 0, best_rmse = 0;
  double mae_sum = 0.0, rmse_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].mae_mgdl < rows[best_mae].mae_mgdl) best_mae = i;
    if (rows[i].rmse_mgdl < rows[best_rmse].rmse_mgdl) best_rmse = i;
    mae_sum += rows[i].mae_mgdl;
    rmse_sum += rows[i].rmse_mgdl;
  }
  const double n = static_cast<double>(rows.size());
  std::string out = "Fold No. | MAE (mg/dL) | RMSE (mg/dL)\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += std::to_string(rows[i].fold) + " | " + fmt(rows[i].mae_mgdl) +
           (i == best_mae ? " *" : "") + " | " + fmt(rows[i].rmse_mgdl) +
           (i == best_rmse ? " *" : "") + "\n";
  }
  out += "mean | " + fmt(mae_sum / n) + " | " + fmt(rmse_sum / n) + "\n";
  out += "min | " + fmt(rows[best_mae].mae_mgdl) + " | " +
         fmt(rows[best_rmse].rmse_mgdl) + "\n";
  double mae_max = rows[0].mae_mgdl, rmse_max = rows[0].rmse_mgdl;
  for (const auto& r : rows) {
    mae_max = std::max(mae_max, r.mae_mgdl);
    rmse_max = std::max(rmse_max, r.rmse_mgdl);
  }
  out += "max | " + fmt(mae_max) + " | " + fmt(rmse_max) + "\n";
  return out;
}

}  // namespace detail

// SVG 1.1 Clarke scatter, reference on x, prediction on y, 0-400 mg/dL axes
// with the standard zone boundary polylines.
inline std::string ceg_svg(const CegSummary& s) {
  constexpr double view = 600.0, margin = 50.0, axis_max = 400.0;
  const double plot = view - 2.0 * margin;
  auto px = [&](double mgdl) { return margin + mgdl / axis_max * plot; };
  auto py = [&](double mgdl) { return view - margin - mgdl / axis_max * plot; };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
         "width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n"
      << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";

  // axes with ticks every 100 mg/dL
  out << "<g stroke=\"black\" fill=\"none\">\n"
      << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot
      << "\" height=\"" << plot << "\"/>\n</g>\n";
  out << "<g font-size=\"14\" text-anchor=\"middle\">\n";
  for (int v = 0; v <= 400; v += 100) {
    out << "<text x=\"" << px(v) << "\" y=\"" << view - margin + 25 << "\">" << v
        << "</text>\n";
    out << "<text x=\"" << margin - 25 << "\" y=\"" << py(v) + 5 << "\">" << v
        << "</text>\n";
  }
  out << "<text x=\"300\" y=\"590\">reference glucose (mg/dL)</text>\n"
      << "<text x=\"15\" y=\"300\" transform=\"rotate(-90 15 300)\">predicted "
         "glucose (mg/dL)</text>\n</g>\n";

  // standard Clarke boundary segments, clipped to the 0-400 frame
  const double seg[][4] = {
      {0, 0, 400, 400},                  // identity
      {0, 70, 175.0 / 3.0, 70},          // lower-left A/B ceiling
      {175.0 / 3.0, 70, 400 / 1.2, 400}, // upper A boundary y = 1.2x
      {70, 84, 70, 400},                 // B/C/D wall at ref 70
      {0, 180, 70, 180},                 // E ceiling left
      {70, 180, 290, 400},               // upper C boundary y = x + 110
      {70, 0, 70, 56},                   // lower A wall at ref 70
      {70, 56, 400, 320},                // lower A boundary y = 0.8x
      {180, 0, 180, 70},                 // E wall bottom right
      {180, 70, 400, 70},                // E/D floor right
      {240, 70, 240, 180},               // D wall right
      {240, 180, 400, 180},              // D ceiling right
      {130, 0, 180, 70},                 // lower C boundary y = 1.4x - 182
  };
  out << "<g stroke=\"dimgray\" stroke-width=\"1\" fill=\"none\">\n";
  for (const auto& s4 : seg)
    out << "<line x1=\"" << px(s4[0]) << "\" y1=\"" << py(s4[1]) << "\" x2=\""
        << px(s4[2]) << "\" y2=\"" << py(s4[3]) << "\"/>\n";
  out << "</g>\n";

  out << "<g fill=\"crimson\">\n";
  for (const auto& [ref, pred] : s.points)
    out << "<circle cx=\"" << px(std::min(ref, axis_max)) << "\" cy=\""
        << py(std::min(pred, axis_max)) << "\" r=\"3\"/>\n";
  out << "</g>\n</svg>\n";
  return out.str();
}

inline std::string render_report(const MetricsReport* metrics, const CegSummary* ceg,
                                 const std::vector<FoldRow>* folds,
                                 ReportFormat format) {
  if (!metrics && !ceg && !folds)
    throw EmptyInput("render_report: nothing to render");
  switch (format) {
    case ReportFormat::csv: {
      std::string out;
      if (metrics) out += detail::metrics_csv(*metrics);
      if (ceg) out += detail::ceg_csv(*ceg);
      if (folds) out += detail::folds_csv(*folds);
      return out;
    }
    case ReportFormat::text: {
      std::string out;
      if (metrics) out += detail::metrics_text(*metrics);
      if (ceg) out += detail::ceg_text(*ceg);
      if (folds) out += detail::folds_text(*folds);
      return out;
    }
    case ReportFormat::svg:
      if (!ceg) throw UnsupportedFormat("svg output needs CEG points");
      return ceg_svg(*ceg);
  }
  throw UnsupportedFormat("unknown report format");
}

}  // namespace ppgglu

#endif  // PPGGLU_METRICS_HPP
