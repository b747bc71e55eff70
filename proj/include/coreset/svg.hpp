#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace coreset {

struct PlotSeries {
  std::string label;
  std::string color = "#000000";
  bool dashed = false;
  std::vector<double> x, y, yerr;  // yerr optional (empty or same length)
};

struct PlotOptions {
  std::string title, xlabel, ylabel;
  bool log_x = false;
  bool log_y = false;
  int width = 780, height = 540;
};

namespace detail {

inline std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof(b), "%.6g", v);
  return b;
}

}  // namespace detail

// Minimal SVG line plot: enough for the scaling figures (log axes, error
// bars, dashed overlays, legend). Non-finite and nonpositive-on-log points
// are dropped from their series.
inline void write_svg_plot(const std::string& path, std::span<const PlotSeries> series,
                           const PlotOptions& opts) {
  const double ml = 70, mr = 20, mt = 36, mb = 52;
  const double pw = opts.width - ml - mr, ph = opts.height - mt - mb;

  auto usable = [&](double vx, double vy) {
    if (!std::isfinite(vx) || !std::isfinite(vy)) return false;
    if (opts.log_x && vx <= 0.0) return false;
    if (opts.log_y && vy <= 0.0) return false;
    return true;
  };

  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      const double vx = opts.log_x ? std::log10(s.x[i]) : s.x[i];
      const double vy = opts.log_y ? std::log10(s.y[i]) : s.y[i];
      x0 = std::min(x0, vx);
      x1 = std::max(x1, vx);
      y0 = std::min(y0, vy);
      y1 = std::max(y1, vy);
    }
  if (x0 > x1) {
    x0 = 0;
    x1 = 1;
  }
  if (y0 > y1) {
    y0 = 0;
    y1 = 1;
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double xpad = 0.04 * (x1 - x0), ypad = 0.06 * (y1 - y0);
  x0 -= xpad;
  x1 += xpad;
  y0 -= ypad;
  y1 += ypad;

  auto px = [&](double v) {
    const double t = opts.log_x ? std::log10(v) : v;
    return ml + pw * (t - x0) / (x1 - x0);
  };
  auto py = [&](double v) {
    const double t = opts.log_y ? std::log10(v) : v;
    return mt + ph * (1.0 - (t - y0) / (y1 - y0));
  };

  std::ofstream os(path, std::ios::binary);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width
     << "\" height=\"" << opts.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << opts.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
     << "font-size=\"15\" font-family=\"sans-serif\">" << opts.title << "</text>\n";

  // frame
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
     << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";

  auto ticks_for = [&](double a, double b, bool logscale) {
    std::vector<double> t;
    if (logscale) {
      for (int d = static_cast<int>(std::floor(a)); d <= static_cast<int>(std::ceil(b)); ++d)
        if (d >= a - 1e-9 && d <= b + 1e-9) t.push_back(std::pow(10.0, d));
    } else {
      const double span = b - a;
      const double step = std::pow(10.0, std::floor(std::log10(span / 4.0)));
      const double s = step * (span / step > 8 ? 2.0 : 1.0);
      for (double v = std::ceil(a / s) * s; v <= b + 1e-9 * span; v += s) t.push_back(v);
    }
    return t;
  };

  for (double tx : ticks_for(x0, x1, opts.log_x)) {
    const double p = px(tx);
    os << "<line x1=\"" << p << "\" y1=\"" << mt + ph << "\" x2=\"" << p << "\" y2=\""
       << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << p << "\" y=\"" << mt + ph + 20
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
       << detail::num(tx) << "</text>\n";
  }
  for (double ty : ticks_for(y0, y1, opts.log_y)) {
    const double p = py(ty);
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << p << "\" x2=\"" << ml << "\" y2=\"" << p
       << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << p + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
       << detail::num(ty) << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << opts.height - 12
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
     << opts.xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
     << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << opts.ylabel
     << "</text>\n";

  double ly = mt + 14;
  for (const auto& s : series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      pts += detail::num(px(s.x[i])) + "," + detail::num(py(s.y[i])) + " ";
    }
    os << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << s.color
       << "\" stroke-width=\"1.6\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "")
       << "/>\n";
    if (s.yerr.size() == s.y.size()) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double lo = s.y[i] - s.yerr[i], hi = s.y[i] + s.yerr[i];
        if (!usable(s.x[i], s.y[i])) continue;
        const double safe_lo = opts.log_y ? std::max(lo, 1e-300) : lo;
        os << "<line x1=\"" << px(s.x[i]) << "\" y1=\"" << py(safe_lo) << "\" x2=\""
           << px(s.x[i]) << "\" y2=\"" << py(hi) << "\" stroke=\"" << s.color
           << "\" stroke-width=\"1\"/>\n";
      }
    }
    os << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\""
       << ml + pw - 126 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
       << "\" stroke-width=\"1.6\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "")
       << "/>\n";
    os << "<text x=\"" << ml + pw - 120 << "\" y=\"" << ly + 4
       << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label << "</text>\n";
    ly += 16;
  }
  os << "</svg>\n";
}

}  // namespace coreset
