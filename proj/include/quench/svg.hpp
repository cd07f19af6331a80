#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace quench::svg {

struct Panel {
  std::string title;
  Eigen::MatrixXd points;  // 2 x N
};

// Standalone SVG with one 800x800 panel per sample set: samples as dots,
// modes overlaid as crosses with their 3-sigma circles. Axis range comes
// from the mode bounding box padded by 4 sigma and is shared by all panels.
// Per panel at most max_points dots are emitted.
std::string scatter_panels(const std::vector<Panel>& panels,
                           const Eigen::Ref<const Eigen::MatrixXd>& modes,
                           double sigma_mode, int max_points = 16384);

}  // namespace quench::svg
