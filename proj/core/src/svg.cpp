#include "grasplearn/svg.hpp"

#include <fstream>
#include <sstream>

#include "grasplearn/errors.hpp"

namespace grasp {

namespace {

constexpr int kSize = 520;
constexpr int kMargin = 40;

double to_px(double v) {
  // [-1,1] -> [margin, size-margin]; y handled by caller sign flip.
  return kMargin + (v + 1.0) / 2.0 * (kSize - 2 * kMargin);
}

}  // namespace

void write_scatter_svg(const std::string& path, const std::vector<ScatterPoint>& points,
                       const std::vector<ScatterGroup>& groups, const std::string& title) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n";
  os << "<rect width=\"" << kSize << "\" height=\"" << kSize << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kSize / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"14\">"
     << title << "</text>\n";
  // Axes box and zero lines.
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize - 2 * kMargin
     << "\" height=\"" << kSize - 2 * kMargin << "\" fill=\"none\" stroke=\"#888\"/>\n";
  os << "<line x1=\"" << to_px(0.0) << "\" y1=\"" << kMargin << "\" x2=\"" << to_px(0.0) << "\" y2=\""
     << kSize - kMargin << "\" stroke=\"#ddd\"/>\n";
  os << "<line x1=\"" << kMargin << "\" y1=\"" << to_px(0.0) << "\" x2=\"" << kSize - kMargin
     << "\" y2=\"" << to_px(0.0) << "\" stroke=\"#ddd\"/>\n";
  for (const ScatterPoint& p : points) {
    const std::string color =
        p.group >= 0 && p.group < static_cast<int>(groups.size()) ? groups[p.group].color : "black";
    os << "<circle cx=\"" << to_px(p.x) << "\" cy=\"" << to_px(-p.y) << "\" r=\"4\" fill=\"" << color
       << "\" fill-opacity=\"0.75\"/>\n";
  }
  // Legend.
  int ly = kMargin + 6;
  for (const ScatterGroup& g : groups) {
    os << "<circle cx=\"" << kSize - kMargin - 110 << "\" cy=\"" << ly << "\" r=\"5\" fill=\""
       << g.color << "\"/>\n";
    os << "<text x=\"" << kSize - kMargin - 100 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << g.label << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
  if (!os) throw StateError("write failed: " + path);
}

}  // namespace grasp
