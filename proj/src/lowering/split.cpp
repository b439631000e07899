#include <algorithm>

#include "dpuc/lowering.hpp"
#include "json.hpp"

namespace dpuc::lower {

Range receptive(Range out, int k, int s, int p, int in_extent) {
  if (out.size() <= 0) return {0, 0};
  const int lo = out.lo * s - p;
  const int hi = (out.hi - 1) * s - p + k;
  return {std::clamp(lo, 0, in_extent), std::clamp(hi, 0, in_extent)};
}

int64_t fm_row_pitch(int64_t row_bytes, const hw::MachineConfig& cfg) { return round_up(row_bytes, cfg.fm_row_bytes); }

OpGeom conv_geometry(const graph::Graph& g, const graph::Node& n) {
  OpGeom o;
  const auto& in = g.tensor(n.inputs.at(0)).shape;
  const auto& out = n.fused ? n.fused->intermediate.shape : g.tensor(n.output).shape;
  o.in_h = in.h, o.in_w = in.w, o.in_c = in.c;
  o.out_h = out.h, o.out_w = out.w, o.out_c = out.c;
  switch (n.op) {
    case graph::OpKind::Conv:
    case graph::OpKind::MaxPool:
    case graph::OpKind::Deconv:
      o.win = n.win;
      break;
    default:
      break;
  }
  return o;
}

TileNode w_split(const OpGeom& g, const hw::MachineConfig& cfg) {
  TileNode root;
  root.out_rows = {0, g.out_h};
  root.out_cols = {0, g.out_w};
  root.out_ch = {0, g.out_c};
  root.in_rows = {0, g.in_h};
  root.in_cols = {0, g.in_w};
  for (int n = 1; n <= g.out_w; ++n) {
    const int cw = static_cast<int>(ceil_div(g.out_w, n));
    if (ceil_div(g.out_w, cw) != n) continue;
    bool ok = int64_t{cw} * g.out_c <= cfg.gamma;
    std::vector<TileNode> kids;
    for (int lo = 0; ok && lo < g.out_w; lo += cw) {
      TileNode c;
      c.axis = TileNode::Axis::W;
      c.out_rows = root.out_rows;
      c.out_cols = {lo, std::min(lo + cw, g.out_w)};
      c.out_ch = root.out_ch;
      c.in_rows = root.in_rows;
      c.in_cols = receptive(c.out_cols, g.win.kw, g.win.sw, g.win.pw, g.in_w);
      if (int64_t{c.in_cols.size()} * g.in_c > cfg.gamma) ok = false;
      kids.push_back(c);
    }
    if (ok) {
      root.children = std::move(kids);
      return root;
    }
  }
  throw InfeasibleError("a single output column exceeds the row-vector limit");
}

TileNode h_split(const OpGeom& g, Range out_cols, int preferred_h, const hw::MachineConfig& cfg) {
  const Range in_cols = receptive(out_cols, g.win.kw, g.win.sw, g.win.pw, g.in_w);
  const int64_t in_pitch = fm_row_pitch(int64_t{in_cols.size()} * g.in_c, cfg);
  const int64_t out_pitch = fm_row_pitch(int64_t{out_cols.size()} * g.out_c, cfg);
  int h = std::min(preferred_h, std::max(g.out_h, 1));
  for (; h >= 1; --h) {
    const int64_t footprint = int64_t{h - 1} * g.win.sh + g.win.kh;
    if (2 * footprint * in_pitch <= cfg.fm_bytes() && 2 * int64_t{h} * out_pitch <= cfg.fm_bytes()) break;
  }
  if (h < 1) throw InfeasibleError("one output row does not fit a feature-map memory");
  TileNode root;
  root.axis = TileNode::Axis::W;
  root.out_rows = {0, g.out_h};
  root.out_cols = out_cols;
  root.out_ch = {0, g.out_c};
  root.in_rows = {0, g.in_h};
  root.in_cols = in_cols;
  for (int lo = 0; lo < g.out_h; lo += h) {
    TileNode c;
    c.axis = TileNode::Axis::H;
    c.out_rows = {lo, std::min(lo + h, g.out_h)};
    c.out_cols = out_cols;
    c.out_ch = root.out_ch;
    c.in_rows = receptive(c.out_rows, g.win.kh, g.win.sh, g.win.ph, g.in_h);
    c.in_cols = in_cols;
    root.children.push_back(c);
  }
  return root;
}

namespace {

const char* axis_name(TileNode::Axis a) {
  switch (a) {
    case TileNode::Axis::Root: return "root";
    case TileNode::Axis::W: return "w";
    case TileNode::Axis::H: return "h";
    case TileNode::Axis::Weights: return "weights";
  }
  return "?";
}

nlohmann::json tile_json(const TileNode& t) {
  auto range = [](Range r) { return nlohmann::json::array({r.lo, r.hi}); };
  nlohmann::json j{{"axis", axis_name(t.axis)},
                   {"out_rows", range(t.out_rows)},
                   {"out_cols", range(t.out_cols)},
                   {"out_ch", range(t.out_ch)},
                   {"in_rows", range(t.in_rows)},
                   {"in_cols", range(t.in_cols)}};
  if (t.leaf()) {
    j["unit"] = std::string(hw::to_string(t.unit));
    j["instrs"] = t.instrs;
  } else {
    j["children"] = nlohmann::json::array();
    for (auto& c : t.children) j["children"].push_back(tile_json(c));
  }
  return j;
}

}  // namespace

std::string to_json(const TileNode& t) { return tile_json(t).dump(1); }

}  // namespace dpuc::lower
