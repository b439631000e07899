#include <algorithm>
#include <set>

#include "dpuc/compiler.hpp"
#include "dpuc/lowering.hpp"

namespace dpuc {

using graph::Node;
using graph::OpKind;

namespace {

bool series_supported(const graph::Graph& g, const Node& n, const hw::MachineConfig& cfg) {
  const auto& x = g.tensor(n.inputs[0]).shape;
  const auto& y = g.tensor(n.output).shape;
  const auto& w = *n.params;
  try {
    lower::decompose_deconv(w, n.factor, n.win.ph, x.h, x.w);
  } catch (const UnsupportedError&) {
    return false;
  }
  return int64_t{x.w} * x.c <= cfg.gamma && int64_t{y.w} * y.c <= cfg.gamma &&
         w.weight_bytes() + 4 * int64_t{w.co} <= cfg.pm_bytes;
}

int next_id(const graph::Graph& g) {
  int m = 0;
  for (auto& n : g.nodes) m = std::max(m, n.id);
  return m + 1;
}

}  // namespace

graph::Graph prepare_graph(const graph::Graph& in, const hw::MachineConfig& cfg, const CompileOptions& opt) {
  graph::Graph g = graph::fold_constants_and_quantizers(in);

  std::vector<Node> added;
  int fresh = next_id(g);
  for (auto& n : g.nodes) {
    if (n.op != OpKind::Deconv || (opt.deconv_series && series_supported(g, n, cfg))) continue;
    const auto& x = g.tensor(n.inputs[0]);
    graph::TensorRef up = x;
    up.name = n.output + "/up";
    up.shape = {x.shape.h * n.factor, x.shape.w * n.factor, x.shape.c};
    g.tensors[up.name] = up;
    Node u;
    u.id = fresh++;
    u.name = n.name.empty() ? "" : n.name + "/up";
    u.op = OpKind::Upsample;
    u.inputs = {n.inputs[0]};
    u.output = up.name;
    u.factor = n.factor;
    added.push_back(u);
    n.op = OpKind::Conv;
    n.inputs = {up.name};
    n.factor = 1;
    n.win.sh = n.win.sw = 1;
  }
  for (auto& u : added) g.nodes.push_back(u);

  std::set<std::string> placed;
  added.clear();
  for (auto& n : g.nodes) {
    if (n.op != OpKind::Concat) continue;
    const auto& out = g.tensor(n.output);
    for (auto& name : n.inputs) {
      const auto& t = g.tensor(name);
      const bool graph_input = std::find(g.inputs.begin(), g.inputs.end(), name) != g.inputs.end();
      if (!graph_input && !g.is_output(name) && !placed.count(name) && t.quant.step == out.quant.step) {
        placed.insert(name);
        continue;
      }
      graph::TensorRef copy = t;
      copy.name = name + "/cat" + std::to_string(n.id);
      copy.quant = out.quant;
      g.tensors[copy.name] = copy;
      Node id;
      id.id = fresh++;
      id.op = OpKind::Identity;
      id.inputs = {name};
      id.output = copy.name;
      added.push_back(id);
      name = copy.name;
      placed.insert(name);
    }
  }
  for (auto& u : added) g.nodes.push_back(u);
  graph::validate(g);
  if (opt.fuse) g = graph::fuse_superlayers(g, cfg);
  return g;
}

}  // namespace dpuc
