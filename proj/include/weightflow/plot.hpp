#pragma once

#include "weightflow/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace weightflow {

struct PlotSeries {
  std::string name;
  std::vector<Date> dates;
  std::vector<double> values;
};

/// Line chart of one or more series sharing a date axis, as a standalone SVG.
void write_line_svg(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title);

}  // namespace weightflow
