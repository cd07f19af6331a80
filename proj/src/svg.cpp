#include "quench/svg.hpp"

#include <algorithm>
#include <cstdio>

namespace quench::svg {

namespace {
std::string f1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
}  // namespace

std::string scatter_panels(const std::vector<Panel>& panels,
                           const Eigen::Ref<const Eigen::MatrixXd>& modes,
                           double sigma_mode, int max_points) {
  const int side = 800;
  const int count = std::max<std::size_t>(panels.size(), 1);
  const int width = side * count;

  const double pad = 4.0 * sigma_mode;
  double lo = modes.minCoeff() - pad;
  double hi = modes.maxCoeff() + pad;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double span = hi - lo;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(side) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(side) + "\">\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double x0 = static_cast<double>(p) * side;
    auto map_x = [&](double v) { return x0 + (v - lo) / span * side; };
    auto map_y = [&](double v) { return side - (v - lo) / span * side; };

    out += "<clipPath id=\"panel" + std::to_string(p) + "\"><rect x=\"" + f1(x0) +
           "\" y=\"0\" width=\"" + std::to_string(side) + "\" height=\"" +
           std::to_string(side) + "\"/></clipPath>\n";
    out += "<g clip-path=\"url(#panel" + std::to_string(p) + ")\">\n";
    out += "<rect x=\"" + f1(x0) + "\" y=\"0\" width=\"" + std::to_string(side) +
           "\" height=\"" + std::to_string(side) + "\" fill=\"white\" stroke=\"#444\"/>\n";

    const auto& pts = panels[p].points;
    const auto n = std::min<Eigen::Index>(pts.cols(), max_points);
    for (Eigen::Index i = 0; i < n; ++i) {
      out += "<circle cx=\"" + f1(map_x(pts(0, i))) + "\" cy=\"" + f1(map_y(pts(1, i))) +
             "\" r=\"1.2\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>\n";
    }
    for (Eigen::Index k = 0; k < modes.cols(); ++k) {
      const double cx = map_x(modes(0, k));
      const double cy = map_y(modes(1, k));
      const double r = 3.0 * sigma_mode / span * side;
      out += "<circle cx=\"" + f1(cx) + "\" cy=\"" + f1(cy) + "\" r=\"" + f1(r) +
             "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1\"/>\n";
      out += "<path d=\"M " + f1(cx - 4) + " " + f1(cy) + " H " + f1(cx + 4) + " M " +
             f1(cx) + " " + f1(cy - 4) + " V " + f1(cy + 4) +
             "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
    }
    if (!panels[p].title.empty()) {
      out += "<text x=\"" + f1(x0 + 12) +
             "\" y=\"24\" font-family=\"sans-serif\" font-size=\"18\" fill=\"#222\">" +
             panels[p].title + "</text>\n";
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace quench::svg
