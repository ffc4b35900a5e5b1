#pragma once

#include <string>
#include <vector>

namespace uqfire::cli {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal line chart over [x_min, x_max] x [y_min, y_max]. NaN points
/// break the line. Optionally draws the y = x diagonal.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           double x_min, double x_max, double y_min, double y_max,
                           bool diagonal = false);

}  // namespace uqfire::cli
