#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmarl {

struct SvgSeries {
  std::string label;
  std::vector<double> y;
};

// Self-contained SVG line chart; every series must match the length of x.
// Output is deterministic, so identical inputs give identical bytes.
void write_line_chart(std::ostream& out, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x,
                      const std::vector<SvgSeries>& series);

}  // namespace gmarl
