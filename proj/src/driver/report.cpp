#include "json.hpp"

#include "dpuc/compiler.hpp"

namespace dpuc {

using nlohmann::ordered_json;

namespace {

const char* space_name(hw::Space s) {
  switch (s) {
    case hw::Space::Ddr: return "ddr";
    case hw::Space::Fm: return "fm";
    case hw::Space::Pm: return "pm";
    default: return "none";
  }
}

ordered_json rings_json(const NodeReport& n) {
  ordered_json r = ordered_json::array();
  for (auto& p : n.rings)
    r.push_back({{"name", p.name}, {"space", space_name(p.space)}, {"mem", p.mem}, {"base", p.base},
                 {"capacity", p.capacity}, {"slices", p.slices}});
  return r;
}

}  // namespace

std::string CompileArtifacts::tiles_json() const {
  ordered_json j = ordered_json::array();
  for (auto& n : nodes)
    j.push_back({{"node", n.id}, {"op", n.op}, {"strategy", n.strategy}, {"tree", ordered_json::parse(lower::to_json(n.tree))}});
  return j.dump(2) + "\n";
}

std::string CompileArtifacts::memmap_json() const {
  ordered_json j;
  ordered_json seg = ordered_json::array();
  for (auto& s : program.segments) seg.push_back({{"name", s.name}, {"base", s.base}, {"size", s.size}});
  j["segments"] = seg;
  ordered_json ten = ordered_json::array();
  for (auto& [name, p] : layout.tensors) {
    ordered_json t = {{"name", name}, {"segment", p.segment}, {"base", p.base}, {"shape", {p.h, p.w, p.c}},
                      {"row_pitch", p.row_pitch}, {"pix_pitch", p.pix_pitch}, {"exp", p.exp}};
    if (!p.view_of.empty()) t["view_of"] = p.view_of;
    ten.push_back(t);
  }
  j["tensors"] = ten;
  ordered_json par = ordered_json::array();
  for (auto& [id, base] : layout.params) par.push_back({{"node", id}, {"base", base}});
  j["parameters"] = par;
  ordered_json fm = ordered_json::array();
  for (auto& n : nodes) fm.push_back({{"node", n.id}, {"rings", rings_json(n)}});
  j["on_chip"] = fm;
  return j.dump(2) + "\n";
}

std::string CompileArtifacts::report_json() const {
  ordered_json j;
  j["schedule"] = schedule;
  j["instructions"] = program.code.size();
  j["makespan"] = makespan;
  j["schedule_failures"] = schedule_failures;
  ordered_json ns = ordered_json::array();
  for (auto& n : nodes)
    ns.push_back({{"id", n.id}, {"op", n.op}, {"strategy", n.strategy}, {"tiles", n.tiles}, {"chunks", n.chunks},
                  {"bands", n.bands}, {"slabs", n.slabs}, {"first_instr", n.first_instr}, {"num_instrs", n.num_instrs},
                  {"attempts", n.attempts}, {"rings", rings_json(n)}});
  j["nodes"] = ns;
  return j.dump(2) + "\n";
}

}  // namespace dpuc
