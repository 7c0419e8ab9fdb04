#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gridshield::cli {

struct Series {
    std::string name;
    std::vector<double> values;
};

/// Static line chart, one polyline per series over a shared x axis.
void write_svg_chart(std::ostream& out, const std::string& title, const std::vector<double>& x,
                     const std::vector<Series>& series, int width = 800, int height = 480);

}  // namespace gridshield::cli
