#include "gmarl/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace gmarl {
namespace {

constexpr double kWidth = 860.0;
constexpr double kHeight = 520.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 30.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                "#9467bd", "#ff7f0e", "#8c564b"};

std::string fixed2(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

std::string label_number(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6g", value);
  return buffer;
}

// Rounds a raw interval up to 1, 2, or 5 times a power of ten.
double nice_step(double span, int target_ticks) {
  if (span <= 0.0) return 1.0;
  double raw = span / target_ticks;
  double magnitude = std::pow(10.0, std::floor(std::log10(raw)));
  double residual = raw / magnitude;
  double factor = residual <= 1.0 ? 1.0 : residual <= 2.0 ? 2.0 : residual <= 5.0 ? 5.0 : 10.0;
  return factor * magnitude;
}

std::vector<double> ticks(double lo, double hi, int target) {
  double step = nice_step(hi - lo, target);
  double first = std::ceil(lo / step) * step;
  std::vector<double> out;
  for (double v = first; v <= hi + 0.5 * step; v += step) {
    out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  }
  return out;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_chart(std::ostream& out, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x,
                      const std::vector<SvgSeries>& series) {
  if (x.empty()) throw std::invalid_argument("write_line_chart: empty x axis");
  for (const SvgSeries& s : series) {
    if (s.y.size() != x.size()) {
      throw std::invalid_argument("write_line_chart: series '" + s.label +
                                  "' does not match the x axis length");
    }
  }

  double x_lo = *std::min_element(x.begin(), x.end());
  double x_hi = *std::max_element(x.begin(), x.end());
  double y_lo = 0.0;
  double y_hi = 1.0;
  bool first = true;
  for (const SvgSeries& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      if (first) {
        y_lo = y_hi = v;
        first = false;
      } else {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
      }
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  double y_pad = 0.05 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double v) { return kTop + (y_hi - v) / (y_hi - y_lo) * plot_h; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << fixed2(kWidth / 2) << "\" y=\"28\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"18\">" << escape(title)
      << "</text>\n";

  for (double t : ticks(x_lo, x_hi, 6)) {
    double gx = px(t);
    out << "<line x1=\"" << fixed2(gx) << "\" y1=\"" << fixed2(kTop) << "\" x2=\""
        << fixed2(gx) << "\" y2=\"" << fixed2(kTop + plot_h)
        << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << fixed2(gx) << "\" y=\"" << fixed2(kTop + plot_h + 20)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << label_number(t) << "</text>\n";
  }
  for (double t : ticks(y_lo, y_hi, 5)) {
    double gy = py(t);
    out << "<line x1=\"" << fixed2(kLeft) << "\" y1=\"" << fixed2(gy) << "\" x2=\""
        << fixed2(kLeft + plot_w) << "\" y2=\"" << fixed2(gy)
        << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << fixed2(kLeft - 8) << "\" y=\"" << fixed2(gy + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">"
        << label_number(t) << "</text>\n";
  }

  out << "<rect x=\"" << fixed2(kLeft) << "\" y=\"" << fixed2(kTop) << "\" width=\""
      << fixed2(plot_w) << "\" height=\"" << fixed2(plot_h)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << fixed2(kLeft + plot_w / 2) << "\" y=\""
      << fixed2(kHeight - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape(x_label) << "</text>\n";
  out << "<text x=\"20\" y=\"" << fixed2(kTop + plot_h / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
      << "transform=\"rotate(-90 20 " << fixed2(kTop + plot_h / 2) << ")\">"
      << escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.8\" points=\"";
    bool leading = true;
    for (std::size_t j = 0; j < x.size(); ++j) {
      double v = series[i].y[j];
      if (!std::isfinite(v)) continue;
      if (!leading) out << " ";
      out << fixed2(px(x[j])) << "," << fixed2(py(v));
      leading = false;
    }
    out << "\"/>\n";

    double ly = kTop + 16.0 + 18.0 * static_cast<double>(i);
    double lx = kLeft + plot_w - 170.0;
    out << "<line x1=\"" << fixed2(lx) << "\" y1=\"" << fixed2(ly - 4) << "\" x2=\""
        << fixed2(lx + 24) << "\" y2=\"" << fixed2(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"1.8\"/>\n";
    out << "<text x=\"" << fixed2(lx + 30) << "\" y=\"" << fixed2(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape(series[i].label) << "</text>\n";
  }

  out << "</svg>\n";
}

}  // namespace gmarl
