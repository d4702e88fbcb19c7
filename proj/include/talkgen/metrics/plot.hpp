#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace talkgen::plot {

struct Series {
  std::string label;
  std::vector<double> values;
  std::array<uint8_t, 3> color = {0, 0, 0};
};

// Overlaid line plot with shared axes, written as PNG. A JSON sidecar
// (path + ".json") records the label-to-color legend and the axis ranges.
void line_plot_png(const std::string& path, const std::vector<Series>& series,
                   int width = 900, int height = 420);

}  // namespace talkgen::plot
