#pragma once

#include <string>
#include <vector>

namespace grasp {

struct ScatterPoint {
  double x = 0;
  double y = 0;
  int group = 0;
};

struct ScatterGroup {
  std::string label;
  std::string color;  // SVG color
};

// Minimal scatter plot over a fixed [-1,1]^2 viewport, written directly as
// SVG (no timestamps, fully deterministic for equal input).
void write_scatter_svg(const std::string& path, const std::vector<ScatterPoint>& points,
                       const std::vector<ScatterGroup>& groups, const std::string& title);

}  // namespace grasp
