#pragma once

#include <string>
#include <vector>

namespace sag {

struct PlotSeries {
    std::string label;
    std::string color;  // css color
    std::vector<std::pair<double, double>> points;
};

// Self-contained SVG line plot (axes, ticks, legend). Output is deterministic
// text; the CSV next to it is the ground truth, this is convenience.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& xlabel, const std::string& ylabel,
                         const std::vector<PlotSeries>& series);

}  // namespace sag
