#include "fedsel/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fedsel/common.hpp"

namespace fedsel {

std::vector<double> smooth_curve(const std::vector<double>& values, int window) {
  if (window <= 1) return values;
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= static_cast<size_t>(window)) acc -= values[i - window];
    const size_t n = std::min(i + 1, static_cast<size_t>(window));
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

}  // namespace

std::string render_svg(const std::vector<Curve>& curves, const std::string& title,
                       const std::string& y_label, int width, int height) {
  const double ml = 60, mr = 16, mt = 32, mb = 40;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  size_t xmax = 1;
  for (const Curve& c : curves) {
    xmax = std::max(xmax, c.values.size());
    for (double v : c.values) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!std::isfinite(ymin)) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }

  auto px = [&](size_t i) { return ml + (xmax <= 1 ? 0.0 : pw * i / (xmax - 1)); };
  auto py = [&](double v) { return mt + ph * (1.0 - (v - ymin) / (ymax - ymin)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << py(v) + 4
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << py(v) << "\" x2=\"" << ml + pw << "\" y2=\""
        << py(v) << "\" stroke=\"#dddddd\"/>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const size_t i = xmax <= 1 ? 0 : (xmax - 1) * k / 4;
    svg << "<text x=\"" << px(i) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">"
        << i + 1 << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\">round</text>\n";
  svg << "<text x=\"14\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << mt + ph / 2 << ")\">" << y_label << "</text>\n";

  for (size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % (sizeof(kColors) / sizeof(kColors[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < curves[c].values.size(); ++i) {
      const double v = curves[c].values[i];
      if (!std::isfinite(v)) continue;
      svg << num(px(i)) << "," << num(py(v)) << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << ml + pw - 4 << "\" y=\"" << mt + 14 + 14 * c
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << curves[c].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_svg(const std::vector<Curve>& curves, const std::string& title,
               const std::string& y_label, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_svg: cannot open " + path);
  out << render_svg(curves, title, y_label);
}

}  // namespace fedsel
