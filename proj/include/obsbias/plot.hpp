#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "obsbias/error.hpp"
#include "obsbias/pipeline.hpp"

namespace obsbias {

/// Figure styling. The canvas height is always
/// row_height * rows + 120 px; width is fixed by the theme.
struct PlotTheme {
  int width = 900;
  int row_height = 30;
  std::string font_family = "Helvetica, Arial, sans-serif";
  int font_size = 12;
  std::string color_full_band = "#cfe8f7";
  std::string color_full_line = "#1f77b4";
  std::string color_pointrange = "#000000";
  std::string color_oce_covariate = "#7b3294";
  std::string color_oce_group = "#e66101";
  std::string color_oce_tip = "#ca0020";
  std::string color_null_line = "#000000";
  std::string color_love_unweighted = "#d7191c";
  std::string color_love_weighted = "#2c7bb6";
  std::string color_reference_line = "#888888";

  void validate() const {
    if (width <= 0 || row_height <= 0 || font_size <= 0) {
      throw domain_error("theme dimensions must be positive");
    }
    for (const std::string* c :
         {&color_full_band, &color_full_line, &color_pointrange,
          &color_oce_covariate, &color_oce_group, &color_oce_tip,
          &color_null_line, &color_love_unweighted, &color_love_weighted,
          &color_reference_line}) {
      if (c->size() != 7 || (*c)[0] != '#' ||
          c->find_first_not_of("0123456789abcdefABCDEF", 1) !=
              std::string::npos) {
        throw domain_error("theme color '" + *c +
                           "' is not 6-digit hex (#rrggbb)");
      }
    }
  }
};

/// Affine data-to-pixel map; both plots place every mark through one of
/// these, so pixel positions are linear in the plotted values.
struct AxisMap {
  double lo = 0.0;
  double hi = 1.0;
  double px_lo = 0.0;
  double px_hi = 1.0;

  double operator()(double v) const {
    return px_lo + (v - lo) * (px_hi - px_lo) / (hi - lo);
  }
};

namespace detail {

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

struct SvgWriter {
  std::string body;
  const PlotTheme& theme;

  explicit SvgWriter(const PlotTheme& t) : theme(t) {}

  void line(double x1, double y1, double x2, double y2,
            const std::string& color, double width = 1.0,
            bool dashed = false) {
    body += "<line x1=\"" + px(x1) + "\" y1=\"" + px(y1) + "\" x2=\"" +
            px(x2) + "\" y2=\"" + px(y2) + "\" stroke=\"" + color +
            "\" stroke-width=\"" + px(width) + "\"";
    if (dashed) body += " stroke-dasharray=\"5,4\"";
    body += "/>\n";
  }
  void rect(double x, double y, double w, double h,
            const std::string& fill) {
    body += "<rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" +
            px(w) + "\" height=\"" + px(h) + "\" fill=\"" + fill +
            "\"/>\n";
  }
  void circle(double cx, double cy, double r, const std::string& fill) {
    body += "<circle cx=\"" + px(cx) + "\" cy=\"" + px(cy) + "\" r=\"" +
            px(r) + "\" fill=\"" + fill + "\"/>\n";
  }
  void text(double x, double y, const std::string& content,
            const std::string& anchor = "start", int size_delta = 0,
            const std::string& color = "#000000") {
    body += "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\" font-family=\"" +
            xml_escape(theme.font_family) + "\" font-size=\"" +
            std::to_string(theme.font_size + size_delta) +
            "\" text-anchor=\"" + anchor + "\" fill=\"" + color + "\">" +
            xml_escape(content) + "</text>\n";
  }

  std::string finish(int width, int height) const {
    std::string out =
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
        "width=\"" +
        std::to_string(width) + "\" height=\"" + std::to_string(height) +
        "\" viewBox=\"0 0 " + std::to_string(width) + " " +
        std::to_string(height) + "\">\n" +
        "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) +
        "\" height=\"" + std::to_string(height) + "\" fill=\"#ffffff\"/>\n" +
        body + "</svg>\n";
    return out;
  }
};

/// Evenly spaced ticks with a 1/2/5 step, deterministic.
inline std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  double t = std::ceil(lo / step) * step;
  for (; t <= hi + 1e-12 * span; t += step) {
    ticks.push_back(t == 0.0 ? 0.0 : t);  // normalize -0
  }
  return ticks;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

/// Axis range used by the love plot: |SMD| from 0 past the data maximum
/// (and always past the 0.1 reference line).
inline AxisMap love_plot_axis(const std::vector<BalanceRecord>& balance,
                              double px_lo, double px_hi) {
  double hi = 0.12;
  for (const auto& b : balance) {
    hi = std::max({hi, std::fabs(b.smd_unweighted),
                   std::fabs(b.smd_weighted)});
  }
  return AxisMap{0.0, hi * 1.05, px_lo, px_hi};
}

/// Love plot: one row per covariate sorted by unweighted |SMD|
/// descending, red (unweighted) and blue (weighted) points, reference
/// line at 0.1.
inline std::string love_plot(const std::vector<BalanceRecord>& balance,
                             const PlotTheme& theme) {
  theme.validate();
  if (balance.empty()) {
    throw domain_error("love plot needs at least one balance record");
  }
  std::vector<BalanceRecord> rows = balance;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BalanceRecord& a, const BalanceRecord& b) {
                     const double ka = std::fabs(a.smd_unweighted);
                     const double kb = std::fabs(b.smd_unweighted);
                     if (ka != kb) return ka > kb;
                     return a.covariate < b.covariate;
                   });

  const int n = static_cast<int>(rows.size());
  const int height = theme.row_height * n + 120;
  const double label_right = 230.0;
  const double plot_lo = label_right + 10.0;
  const double plot_hi = theme.width - 30.0;
  const double top = 60.0;
  const AxisMap axis = love_plot_axis(rows, plot_lo, plot_hi);

  detail::SvgWriter svg(theme);
  svg.text(20.0, 30.0, "Covariate balance", "start", 4);
  // Legend.
  svg.circle(plot_lo + 10.0, 30.0, 4.0, theme.color_love_unweighted);
  svg.text(plot_lo + 20.0, 34.0, "Unweighted");
  svg.circle(plot_lo + 120.0, 30.0, 4.0, theme.color_love_weighted);
  svg.text(plot_lo + 130.0, 34.0, "Overlap weighted");

  const double bottom = top + theme.row_height * n;
  for (double t : detail::nice_ticks(axis.lo, axis.hi)) {
    const double x = axis(t);
    svg.line(x, top, x, bottom, "#dddddd");
    svg.text(x, bottom + 18.0, detail::tick_label(t), "middle", -2);
  }
  svg.line(axis(0.1), top, axis(0.1), bottom, theme.color_reference_line,
           1.0, true);
  for (int i = 0; i < n; ++i) {
    const double y = top + theme.row_height * (i + 0.5);
    svg.text(label_right, y + 4.0, rows[static_cast<std::size_t>(i)].covariate,
             "end");
    svg.line(plot_lo, y, plot_hi, y, "#f0f0f0");
    svg.circle(axis(std::fabs(rows[static_cast<std::size_t>(i)].smd_unweighted)),
               y, 4.0, theme.color_love_unweighted);
    svg.circle(axis(std::fabs(rows[static_cast<std::size_t>(i)].smd_weighted)),
               y, 4.0, theme.color_love_weighted);
  }
  svg.text((plot_lo + plot_hi) / 2.0, bottom + 40.0,
           "Absolute standardized mean difference", "middle");
  return svg.finish(theme.width, height);
}

/// Panel A axis: ratio scale covering every interval and the null.
inline AxisMap bias_plot_axis_a(const std::vector<ObservedBiasRecord>& records,
                                const ObservedBiasRecord& full,
                                double px_lo, double px_hi) {
  double lo = std::min(1.0, full.lcl);
  double hi = std::max(1.0, full.ucl);
  for (const auto& r : records) {
    if (r.failed() || r.kind == RecordKind::Full) continue;
    lo = std::min(lo, r.lcl);
    hi = std::max(hi, r.ucl);
  }
  if (!(hi > lo)) {
    hi = lo + 1.0;  // degenerate data: every value exactly at one point
  }
  const double pad = 0.05 * (hi - lo);
  return AxisMap{lo - pad, hi + pad, px_lo, px_hi};
}

/// Panel B axis: E-value scale from 1 past the largest OCE.
inline AxisMap bias_plot_axis_b(const std::vector<ObservedBiasRecord>& records,
                                double px_lo, double px_hi) {
  double hi = 1.1;
  for (const auto& r : records) {
    if (r.failed() || r.kind == RecordKind::Full) continue;
    hi = std::max(hi, r.oce);
  }
  return AxisMap{1.0, hi * 1.05, px_lo, px_hi};
}

/// Two-panel observed bias plot. Panel A: point ranges on the ratio
/// scale with the full-model estimate line, confidence band, and dashed
/// null line. Panel B: Observed Covariate E-values colored by record
/// kind. Rows follow the caller's ordering; records flagged as failed
/// render as an annotation, and any full-kind record is skipped (the
/// full model is the band, not a row).
inline std::string observed_bias_plot(
    const std::vector<ObservedBiasRecord>& records,
    const ObservedBiasRecord& full, const PlotTheme& theme) {
  theme.validate();
  std::vector<ObservedBiasRecord> rows;
  for (const auto& r : records) {
    if (r.kind != RecordKind::Full) rows.push_back(r);
  }
  if (rows.empty()) {
    throw domain_error("observed bias plot needs at least one record");
  }

  const int n = static_cast<int>(rows.size());
  const int height = theme.row_height * n + 120;
  const double label_right = 250.0;
  const double a_lo = label_right + 10.0;
  const double a_hi = a_lo + (theme.width - a_lo - 30.0) * 0.55;
  const double b_lo = a_hi + 50.0;
  const double b_hi = theme.width - 30.0;
  const double top = 60.0;
  const double bottom = top + theme.row_height * n;

  const AxisMap axis_a = bias_plot_axis_a(rows, full, a_lo, a_hi);
  const AxisMap axis_b = bias_plot_axis_b(rows, b_lo, b_hi);

  detail::SvgWriter svg(theme);
  svg.text(a_lo, 30.0, "A. Most influential covariates", "start", 2);
  svg.text(b_lo, 30.0, "B. Sensitivity to unmeasured confounding", "start",
           2);

  // Full-model band and reference lines, panel A.
  svg.rect(axis_a(full.lcl), top, axis_a(full.ucl) - axis_a(full.lcl),
           bottom - top, theme.color_full_band);
  svg.line(axis_a(full.lcl), top, axis_a(full.lcl), bottom,
           theme.color_full_line, 1.0, true);
  svg.line(axis_a(full.ucl), top, axis_a(full.ucl), bottom,
           theme.color_full_line, 1.0, true);
  svg.line(axis_a(full.estimate), top, axis_a(full.estimate), bottom,
           theme.color_full_line, 2.0);
  svg.line(axis_a(1.0), top, axis_a(1.0), bottom, theme.color_null_line,
           1.0, true);

  for (double t : detail::nice_ticks(axis_a.lo, axis_a.hi)) {
    svg.text(axis_a(t), bottom + 18.0, detail::tick_label(t), "middle", -2);
    svg.line(axis_a(t), bottom, axis_a(t), bottom + 4.0, "#000000");
  }
  for (double t : detail::nice_ticks(axis_b.lo, axis_b.hi)) {
    svg.text(axis_b(t), bottom + 18.0, detail::tick_label(t), "middle", -2);
    svg.line(axis_b(t), bottom, axis_b(t), bottom + 4.0, "#000000");
  }

  for (int i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    const double y = top + theme.row_height * (i + 0.5);
    svg.text(label_right, y + 4.0, "Dropped " + r.label, "end");
    if (r.failed()) {
      svg.text(a_lo + 4.0, y + 4.0, "fit failed: " + r.error, "start", -2,
               "#999999");
      continue;
    }
    svg.line(axis_a(r.lcl), y, axis_a(r.ucl), y, theme.color_pointrange,
             1.5);
    svg.circle(axis_a(r.estimate), y, 3.5, theme.color_pointrange);
    const std::string* color = &theme.color_oce_covariate;
    if (r.kind == RecordKind::Group) color = &theme.color_oce_group;
    if (r.kind == RecordKind::Tip) color = &theme.color_oce_tip;
    svg.circle(axis_b(r.oce), y, 3.5, *color);
  }

  svg.text((a_lo + a_hi) / 2.0, bottom + 40.0,
           "Effect modeled without variable(s) of interest", "middle");
  svg.text((b_lo + b_hi) / 2.0, bottom + 40.0,
           "Observed Covariate E-value", "middle");
  return svg.finish(theme.width, height);
}

/// Apply partial theme overrides from a JSON object; unknown keys are
/// rejected.
inline PlotTheme parse_theme(const std::string& text,
                             PlotTheme base = PlotTheme{}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(std::string("theme: ") + e.what());
  }
  if (!doc.is_object()) {
    throw schema_error("theme: top level must be a JSON object");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key == "width") {
      base.width = value.get<int>();
    } else if (key == "row_height") {
      base.row_height = value.get<int>();
    } else if (key == "font_family") {
      base.font_family = value.get<std::string>();
    } else if (key == "font_size") {
      base.font_size = value.get<int>();
    } else if (key == "color_full_band") {
      base.color_full_band = value.get<std::string>();
    } else if (key == "color_full_line") {
      base.color_full_line = value.get<std::string>();
    } else if (key == "color_pointrange") {
      base.color_pointrange = value.get<std::string>();
    } else if (key == "color_oce_covariate") {
      base.color_oce_covariate = value.get<std::string>();
    } else if (key == "color_oce_group") {
      base.color_oce_group = value.get<std::string>();
    } else if (key == "color_oce_tip") {
      base.color_oce_tip = value.get<std::string>();
    } else if (key == "color_null_line") {
      base.color_null_line = value.get<std::string>();
    } else if (key == "color_love_unweighted") {
      base.color_love_unweighted = value.get<std::string>();
    } else if (key == "color_love_weighted") {
      base.color_love_weighted = value.get<std::string>();
    } else if (key == "color_reference_line") {
      base.color_reference_line = value.get<std::string>();
    } else {
      throw schema_error("theme: unknown key '" + key + "'");
    }
  }
  base.validate();
  return base;
}

inline PlotTheme read_theme(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_theme(buf.str());
}

inline void write_text_file(const std::string& text,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw io_error("cannot open '" + path.string() + "' for writing");
  }
  out << text;
  if (!out) {
    throw io_error("write failed for '" + path.string() + "'");
  }
}

}  // namespace obsbias
