#include <algorithm>
#include <functional>

#include "dpuc/memory.hpp"

namespace dpuc::mem {

hw::Operand Placement::operand() const {
  hw::Operand o;
  o.space = hw::Space::Ddr;
  o.base = base;
  o.row_pitch = row_pitch;
  o.pix_pitch = pix_pitch;
  return o;
}

const hw::Segment& DdrLayout::segment(const std::string& name) const {
  for (auto& s : segments)
    if (s.name == name) return s;
  throw Error("no DDR segment '" + name + "'");
}

int64_t DdrLayout::total() const {
  int64_t end = 0;
  for (auto& s : segments) end = std::max(end, s.base + s.size);
  return end;
}

int64_t param_block_bytes(const graph::Node& n) {
  if (!n.params) return 0;
  return n.params->weight_bytes() + 4 * int64_t{n.params->co};
}

DdrLayout ddr_layout(const graph::Graph& g, int64_t instructions) {
  using graph::OpKind;
  DdrLayout L;
  // concat input -> (concat output, channel offset)
  std::map<std::string, std::pair<std::string, int>> views;
  for (auto& n : g.nodes) {
    if (n.op != OpKind::Concat) continue;
    int off = 0;
    for (auto& in : n.inputs) {
      const auto& t = g.tensor(in);
      const bool input = std::find(g.inputs.begin(), g.inputs.end(), in) != g.inputs.end();
      if (input || g.is_output(in) || views.count(in) || t.quant.step != g.tensor(n.output).quant.step)
        throw CompileError("concat input '" + in + "' cannot be laid out in place");
      views[in] = {n.output, off};
      off += t.shape.c;
    }
  }

  std::map<std::string, int64_t> seg_size{{"inputs", 0}, {"outputs", 0}, {"swap", 0}};
  auto place = [&](const graph::TensorRef& t) {
    Placement p;
    p.segment = std::find(g.inputs.begin(), g.inputs.end(), t.name) != g.inputs.end() ? "inputs"
                : g.is_output(t.name)                                              ? "outputs"
                                                                                  : "swap";
    p.h = t.shape.h, p.w = t.shape.w, p.c = t.shape.c;
    p.pix_pitch = t.shape.c;
    p.row_pitch = int64_t{t.shape.w} * t.shape.c;
    p.exp = t.quant.exponent();
    p.base = seg_size[p.segment];  // relative for now
    seg_size[p.segment] = round_up(p.base + t.bytes(), kDdrAlign);
    L.tensors[t.name] = p;
  };
  for (auto& [name, t] : g.tensors)
    if (!t.is_param() && t.dtype == graph::DType::Int8 && !views.count(name)) place(t);
  for (auto& n : g.nodes)
    if (n.fused && !g.tensors.count(n.fused->intermediate.name)) place(n.fused->intermediate);

  int64_t params = 0;
  for (auto& n : g.nodes)
    if (n.params) {
      L.params[n.id] = params;
      params = round_up(params + param_block_bytes(n), kDdrAlign);
    }

  int64_t at = 0;
  for (auto [name, size] : {std::pair<std::string, int64_t>{"inputs", seg_size["inputs"]},
                            {"outputs", seg_size["outputs"]},
                            {"parameters", params},
                            {"swap", seg_size["swap"]},
                            {"instructions", instructions * kInstrBytes}}) {
    L.segments.push_back({name, at, size});
    at = round_up(at + size, kDdrAlign);
  }
  for (auto& [name, p] : L.tensors) p.base += L.segment(p.segment).base;
  for (auto& [id, base] : L.params) base += L.segment("parameters").base;

  std::function<const Placement&(const std::string&)> resolve = [&](const std::string& name) -> const Placement& {
    if (auto it = L.tensors.find(name); it != L.tensors.end()) return it->second;
    const auto& [outer, off] = views.at(name);
    const Placement& o = resolve(outer);
    const auto& t = g.tensor(name);
    Placement p = o;
    p.base = o.base + off;
    p.h = t.shape.h, p.w = t.shape.w, p.c = t.shape.c;
    p.exp = t.quant.exponent();
    p.view_of = outer;
    return L.tensors[name] = p;
  };
  for (auto& [name, v] : views) resolve(name);
  return L;
}

}  // namespace dpuc::mem
