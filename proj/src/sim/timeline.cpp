#include <sstream>

#include "dpuc/sim.hpp"

namespace dpuc::sim {

namespace {

const char* fill(const std::string& color) {
  if (color == "blue") return "#3b6fd8";
  if (color == "black") return "#202020";
  if (color == "green") return "#3da64a";
  if (color == "yellow") return "#e0c020";
  if (color == "purple") return "#8a4fc8";
  if (color == "red") return "#d83b3b";
  return "#a0a0a0";
}

}  // namespace

std::string timeline_svg(const Trace& t) {
  constexpr int kLane = 28, kLeft = 60, kWidth = 1200;
  const hw::OpType lanes[] = {hw::OpType::Load, hw::OpType::Conv, hw::OpType::Misc, hw::OpType::Save};
  const double scale = t.makespan > 0 ? static_cast<double>(kWidth) / static_cast<double>(t.makespan) : 1.0;
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kWidth + 10 << "\" height=\"" << 4 * kLane + 30
    << "\" font-family=\"monospace\" font-size=\"11\">\n";
  for (int l = 0; l < 4; ++l)
    s << "<text x=\"4\" y=\"" << l * kLane + 18 << "\">" << hw::to_string(lanes[l]) << "</text>\n";
  for (auto& e : t.events) {
    int lane = 0;
    for (int l = 0; l < 4; ++l)
      if (lanes[l] == e.queue) lane = l;
    s << "<rect x=\"" << kLeft + e.start * scale << "\" y=\"" << lane * kLane + 4 << "\" width=\""
      << std::max(0.5, (e.end - e.start) * scale) << "\" height=\"" << kLane - 8 << "\" fill=\"" << fill(e.color)
      << "\"><title>" << e.index << ' ' << hw::to_string(e.sub) << ' ' << e.start << '-' << e.end << "</title></rect>\n";
  }
  s << "<text x=\"" << kLeft << "\" y=\"" << 4 * kLane + 20 << "\">makespan " << t.makespan << " cycles</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace dpuc::sim
