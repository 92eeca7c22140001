#pragma once

// Minimal self-contained SVG emitter for the command-line plots: line
// plots of time traces and grouped bar charts of per-photon fidelity
// budgets. Axes, ticks and a legend are drawn from scratch so the
// output depends on nothing but the data and is byte-stable.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "vsi/common.hpp"

namespace vsi {
namespace svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
  bool log_y = false;
};

namespace detail {

// fixed two-decimal pixel coordinates keep the files small and stable
inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#33658a", "#b0413e", "#4f772d",
                                 "#7d5ba6", "#c77d2f", "#3b7f7a"};
  return colors[i % (sizeof colors / sizeof colors[0])];
}

// tick spacing of the form {1,2,5} * 10^k giving a handful of ticks
inline double nice_step(double span, int target_ticks) {
  if (!(span > 0)) return 1.0;
  double raw = span / std::max(1, target_ticks);
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double step;
  if (frac <= 1.0)
    step = 1.0;
  else if (frac <= 2.0)
    step = 2.0;
  else if (frac <= 5.0)
    step = 5.0;
  else
    step = 10.0;
  return step * mag;
}

struct Frame {
  double left, right, top, bottom;  // pixel edges of the data area
  double x0, x1, y0, y1;            // data ranges
  bool log_y = false;

  double sx(double x) const {
    if (x1 == x0) return 0.5 * (left + right);
    return left + (x - x0) / (x1 - x0) * (right - left);
  }
  double sy(double y) const {
    double v = log_y ? std::log10(y) : y;
    double a = log_y ? std::log10(y0) : y0;
    double b = log_y ? std::log10(y1) : y1;
    if (b == a) return 0.5 * (top + bottom);
    return bottom - (v - a) / (b - a) * (bottom - top);
  }
};

inline void open_document(std::string& out, const PlotSpec& spec) {
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) +
         "\" height=\"" + std::to_string(spec.height) + "\" viewBox=\"0 0 " +
         std::to_string(spec.width) + " " + std::to_string(spec.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!spec.title.empty())
    out += "<text x=\"" + px(spec.width / 2.0) +
           "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           escape(spec.title) + "</text>\n";
}

inline void draw_axes(std::string& out, const PlotSpec& spec, const Frame& f) {
  out += "<rect x=\"" + px(f.left) + "\" y=\"" + px(f.top) + "\" width=\"" +
         px(f.right - f.left) + "\" height=\"" + px(f.bottom - f.top) +
         "\" fill=\"none\" stroke=\"#444444\"/>\n";
  if (!spec.x_label.empty())
    out += "<text x=\"" + px((f.left + f.right) / 2.0) + "\" y=\"" + px(spec.height - 8.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(spec.x_label) + "</text>\n";
  if (!spec.y_label.empty())
    out += "<text x=\"14\" y=\"" + px((f.top + f.bottom) / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 " +
           px((f.top + f.bottom) / 2.0) + ")\">" + escape(spec.y_label) + "</text>\n";
}

inline void draw_y_ticks(std::string& out, const Frame& f) {
  if (f.log_y) {
    int k0 = int(std::ceil(std::log10(f.y0) - 1e-9));
    int k1 = int(std::floor(std::log10(f.y1) + 1e-9));
    for (int k = k0; k <= k1; ++k) {
      double y = f.sy(std::pow(10.0, k));
      out += "<line x1=\"" + px(f.left - 4) + "\" y1=\"" + px(y) + "\" x2=\"" + px(f.left) +
             "\" y2=\"" + px(y) + "\" stroke=\"#444444\"/>\n";
      out += "<text x=\"" + px(f.left - 7) + "\" y=\"" + px(y + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" +
             std::to_string(k) + "</text>\n";
    }
    return;
  }
  double step = nice_step(f.y1 - f.y0, 5);
  double first = std::ceil(f.y0 / step - 1e-9) * step;
  for (double v = first; v <= f.y1 + 1e-9 * step; v += step) {
    double y = f.sy(v);
    out += "<line x1=\"" + px(f.left - 4) + "\" y1=\"" + px(y) + "\" x2=\"" + px(f.left) +
           "\" y2=\"" + px(y) + "\" stroke=\"#444444\"/>\n";
    out += "<text x=\"" + px(f.left - 7) + "\" y=\"" + px(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           num(std::abs(v) < 1e-12 * step ? 0.0 : v) + "</text>\n";
  }
}

inline void draw_x_ticks(std::string& out, const Frame& f) {
  double step = nice_step(f.x1 - f.x0, 6);
  double first = std::ceil(f.x0 / step - 1e-9) * step;
  for (double v = first; v <= f.x1 + 1e-9 * step; v += step) {
    double x = f.sx(v);
    out += "<line x1=\"" + px(x) + "\" y1=\"" + px(f.bottom) + "\" x2=\"" + px(x) + "\" y2=\"" +
           px(f.bottom + 4) + "\" stroke=\"#444444\"/>\n";
    out += "<text x=\"" + px(x) + "\" y=\"" + px(f.bottom + 17) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           num(std::abs(v) < 1e-12 * step ? 0.0 : v) + "</text>\n";
  }
}

inline void draw_legend(std::string& out, const Frame& f,
                        const std::vector<std::string>& labels) {
  if (labels.size() < 2) return;
  double x = f.left + 10, y = f.top + 16;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += "<rect x=\"" + px(x) + "\" y=\"" + px(y - 9) +
           "\" width=\"12\" height=\"12\" fill=\"" + palette(i) + "\"/>\n";
    out += "<text x=\"" + px(x + 17) + "\" y=\"" + px(y + 1) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(labels[i]) + "</text>\n";
    y += 16;
  }
}

}  // namespace detail

// Polyline plot of one or more series sharing the axes. Every series
// needs equal-length x/y and at least one point; a log y axis needs
// strictly positive values.
inline std::string line_plot(const PlotSpec& spec, const std::vector<Series>& series) {
  if (series.empty()) throw ConfigError("plot needs at least one series");
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw ConfigError("plot series '" + s.label + "' needs matching non-empty x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      require_finite(s.x[i], "plot x");
      require_finite(s.y[i], "plot y");
      if (spec.log_y && !(s.y[i] > 0))
        throw ConfigError("log-scale plot needs positive values");
      if (first) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (y0 == y1) {  // flat data still gets a visible band
    y0 -= 0.5;
    y1 += 0.5;
    if (spec.log_y) {
      y0 = y1 / 4.0;
      y1 = y1 * 2.0;
    }
  } else if (!spec.log_y) {
    double pad = 0.05 * (y1 - y0);
    if (y0 > 0 && y0 - pad < 0 && y0 < 0.3 * (y1 - y0))
      y0 = 0;  // anchor near-zero baselines at zero
    else
      y0 -= pad;
    y1 += pad;
  }

  detail::Frame f;
  f.left = 62;
  f.right = spec.width - 18;
  f.top = spec.title.empty() ? 18 : 34;
  f.bottom = spec.height - 44;
  f.x0 = x0;
  f.x1 = x1;
  f.y0 = y0;
  f.y1 = y1;
  f.log_y = spec.log_y;

  std::string out;
  detail::open_document(out, spec);
  detail::draw_axes(out, spec, f);
  detail::draw_y_ticks(out, f);
  detail::draw_x_ticks(out, f);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    out += "<polyline fill=\"none\" stroke=\"";
    out += detail::palette(si);
    out += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out += ' ';
      out += detail::px(f.sx(s.x[i])) + "," + detail::px(f.sy(s.y[i]));
    }
    out += "\"/>\n";
  }
  std::vector<std::string> labels;
  for (const auto& s : series) labels.push_back(s.label);
  detail::draw_legend(out, f, labels);
  out += "</svg>\n";
  return out;
}

struct BarSeries {
  std::string label;
  std::vector<double> values;  // one value per category
};

// Grouped bar chart: one cluster of bars per category, one bar per
// series within the cluster. Values must be finite and non-negative;
// the y axis always starts at zero.
inline std::string bar_chart(const PlotSpec& spec, const std::vector<std::string>& categories,
                             const std::vector<BarSeries>& series) {
  if (categories.empty() || series.empty())
    throw ConfigError("bar chart needs categories and at least one series");
  double y1 = 0;
  for (const auto& s : series) {
    if (s.values.size() != categories.size())
      throw ConfigError("bar series '" + s.label + "' needs one value per category");
    for (double v : s.values) {
      require_finite(v, "bar value");
      if (v < 0) throw ConfigError("bar values must be non-negative");
      y1 = std::max(y1, v);
    }
  }
  if (y1 == 0) y1 = 1.0;
  y1 *= 1.05;

  detail::Frame f;
  f.left = 62;
  f.right = spec.width - 18;
  f.top = spec.title.empty() ? 18 : 34;
  f.bottom = spec.height - 44;
  f.x0 = 0;
  f.x1 = double(categories.size());
  f.y0 = 0;
  f.y1 = y1;

  std::string out;
  detail::open_document(out, spec);
  detail::draw_axes(out, spec, f);
  detail::draw_y_ticks(out, f);

  double cluster = (f.right - f.left) / double(categories.size());
  double bar = 0.8 * cluster / double(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double cx = f.left + (double(c) + 0.5) * cluster;
    for (std::size_t si = 0; si < series.size(); ++si) {
      double v = series[si].values[c];
      double x = cx - 0.4 * cluster + double(si) * bar;
      double top = f.sy(v);
      out += "<rect x=\"" + detail::px(x) + "\" y=\"" + detail::px(top) + "\" width=\"" +
             detail::px(bar) + "\" height=\"" + detail::px(f.bottom - top) + "\" fill=\"" +
             detail::palette(si) + "\"/>\n";
    }
    out += "<text x=\"" + detail::px(cx) + "\" y=\"" + detail::px(f.bottom + 17) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::escape(categories[c]) + "</text>\n";
  }
  if (!spec.x_label.empty())
    out += "<text x=\"" + detail::px((f.left + f.right) / 2.0) + "\" y=\"" +
           detail::px(spec.height - 8.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::escape(spec.x_label) + "</text>\n";
  std::vector<std::string> labels;
  for (const auto& s : series) labels.push_back(s.label);
  detail::draw_legend(out, f, labels);
  out += "</svg>\n";
  return out;
}

}  // namespace svg
}  // namespace vsi
