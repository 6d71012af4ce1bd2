#pragma once

#include <string>
#include <vector>

namespace fedsel {

struct Curve {
  std::string label;
  std::vector<double> values;  // one point per round, in order
};

// Moving average over a trailing window; window <= 1 returns the input.
std::vector<double> smooth_curve(const std::vector<double>& values, int window);

// Minimal line chart: axes, tick labels, one polyline per curve, legend.
std::string render_svg(const std::vector<Curve>& curves, const std::string& title,
                       const std::string& y_label, int width = 720, int height = 420);

void write_svg(const std::vector<Curve>& curves, const std::string& title,
               const std::string& y_label, const std::string& path);

}  // namespace fedsel
