#include <algorithm>
#include <climits>
#include <functional>
#include <set>

#include "dpuc/graph.hpp"
#include "dpuc/hw.hpp"
#include "dpuc/lowering.hpp"
#include "dpuc/quant.hpp"

namespace dpuc::graph {

namespace {

void erase_node(Graph& g, int id) {
  g.nodes.erase(std::remove_if(g.nodes.begin(), g.nodes.end(), [&](const Node& n) { return n.id == id; }), g.nodes.end());
}

bool is_input(const Graph& g, const std::string& t) {
  return std::find(g.inputs.begin(), g.inputs.end(), t) != g.inputs.end();
}

std::vector<int32_t> requantize_constant(const std::vector<int32_t>& v, int from, int to, DType dtype) {
  std::vector<int32_t> out;
  out.reserve(v.size());
  for (int32_t x : v) {
    const int64_t r = quant::shift_round(x, to - from);
    out.push_back(dtype == DType::Int8 ? quant::saturate8(r) : static_cast<int32_t>(std::clamp<int64_t>(r, INT32_MIN, INT32_MAX)));
  }
  return out;
}

const Node& param_producer(const Graph& g, const std::string& t, int user) {
  const int pi = g.producer_index(t);
  if (pi < 0 || g.nodes[pi].op != OpKind::Param)
    throw FoldError("node " + std::to_string(user) + ": weights '" + t + "' are not a constant");
  return g.nodes[pi];
}

}  // namespace

Graph fold_constants_and_quantizers(const Graph& g) {
  Graph o = g;
  std::vector<int> fixes;
  for (auto& n : o.nodes)
    if (n.op == OpKind::FixNeuron) fixes.push_back(n.id);
  for (int id : fixes) {
    const Node f = o.node(id);
    const std::string t = f.inputs[0], u = f.output;
    const TensorRef tt = o.tensor(t), uu = o.tensor(u);
    Node& p = o.nodes[o.producer_index(t)];
    const bool single = o.consumers(t).size() == 1 && !o.is_output(t);
    if (p.op == OpKind::Param) {
      if (!single) throw FoldError("constant '" + t + "' feeds a quantizer and other nodes");
      p.constant->values = requantize_constant(p.constant->values, tt.quant.exponent(), uu.quant.exponent(), uu.dtype);
      p.output = u;
      erase_node(o, id);
      o.tensors.erase(t);
    } else if (tt.dtype == DType::Int32) {
      if (!single) throw FoldError("accumulator '" + t + "' has more than one consumer");
      p.output = u;
      erase_node(o, id);
      o.tensors.erase(t);
    } else if (tt.quant.step == uu.quant.step && !(o.is_output(u) && (is_input(o, t) || o.is_output(t)))) {
      for (auto& n : o.nodes)
        for (auto& i : n.inputs)
          if (i == u) i = t;
      for (auto& out : o.outputs)
        if (out == u) out = t;
      erase_node(o, id);
      o.tensors.erase(u);
    } else {
      o.node(id).op = OpKind::Identity;
    }
  }

  for (auto& n : o.nodes) {
    if ((n.op != OpKind::Conv && n.op != OpKind::Deconv) || n.inputs.size() < 2) continue;
    const TensorRef& wt = o.tensor(n.inputs[1]);
    const Node& wp = param_producer(o, n.inputs[1], n.id);
    if (wt.dtype != DType::Int8 || wt.dims.size() != 4) throw FoldError("node " + std::to_string(n.id) + ": weights must be int8 4-D");
    WeightSpec w;
    w.co = wt.dims[0], w.kh = wt.dims[1], w.kw = wt.dims[2], w.ci = wt.dims[3];
    for (int32_t v : wp.constant->values) w.weights.push_back(static_cast<int8_t>(v));
    w.weight_exp = wt.quant.exponent();
    if (n.inputs.size() > 2) {
      const TensorRef& bt = o.tensor(n.inputs[2]);
      const Node& bp = param_producer(o, n.inputs[2], n.id);
      if (bt.dims.size() != 1 || bt.dims[0] != w.co) throw FoldError("node " + std::to_string(n.id) + ": bias length mismatch");
      w.bias = bp.constant->values;
      w.bias_exp = bt.quant.exponent();
    }
    n.params = std::move(w);
    n.inputs.resize(1);
  }

  std::vector<int> dead;
  for (auto& n : o.nodes) {
    if (n.op != OpKind::Param) continue;
    if (!o.consumers(n.output).empty() || o.is_output(n.output))
      throw FoldError("constant '" + n.output + "' feeds a node that cannot hold parameters");
    dead.push_back(n.id);
  }
  for (int id : dead) {
    o.tensors.erase(o.node(id).output);
    erase_node(o, id);
  }
  validate(o);
  return o;
}

namespace {

// Node ids reachable from `from` following data edges forward.
std::set<int> descendants(const Graph& g, int from) {
  std::set<int> seen;
  std::vector<int> work{from};
  while (!work.empty()) {
    int id = work.back();
    work.pop_back();
    for (int c : g.consumers(g.node(id).output))
      if (seen.insert(c).second) work.push_back(c);
  }
  return seen;
}

bool largest_independent_conv(const Graph& g, const Node& c) {
  const auto down = descendants(g, c.id);
  const int64_t macs = mac_count(g, c);
  for (auto& n : g.nodes) {
    if (n.id == c.id || (n.op != OpKind::Conv && n.op != OpKind::Deconv)) continue;
    if (down.count(n.id) || descendants(g, n.id).count(c.id)) continue;
    if (mac_count(g, n) > macs) return false;
  }
  return true;
}

}  // namespace

Graph fuse_superlayers(const Graph& g, const hw::MachineConfig& cfg) {
  Graph o = g;
  std::vector<int> convs;
  for (auto& n : o.nodes)
    if (n.op == OpKind::Conv && !n.fused && n.params) convs.push_back(n.id);
  for (int id : convs) {
    const Node c = o.node(id);
    const std::string t = c.output;
    const auto cons = o.consumers(t);
    if (o.is_output(t) || cons.size() != 1) continue;
    const Node d = o.node(cons[0]);
    std::string residual;
    if (d.op == OpKind::EltwiseAdd) {
      if (d.inputs[0] == d.inputs[1]) continue;
      residual = d.inputs[0] == t ? d.inputs[1] : d.inputs[0];
    } else if (d.op != OpKind::MaxPool) {
      continue;
    }
    const auto plan = lower::plan_fusion(lower::conv_geometry(o, c), d.op, d.win, cfg);
    if (!plan.enabled || !largest_independent_conv(o, c)) continue;
    // fusing saves one DDR round trip of the intermediate
    const int64_t saved = 2 * ceil_div(o.tensor(t).bytes(), cfg.ddr_bytes_per_cycle);
    if (saved <= 0) continue;
    Node& n = o.node(id);
    FusedConsumer fc;
    fc.kind = d.op;
    if (d.op == OpKind::MaxPool) fc.pool = d.win;
    fc.relu = d.op == OpKind::EltwiseAdd && d.relu;
    fc.intermediate = o.tensor(t);
    n.fused = std::move(fc);
    n.output = d.output;
    if (!residual.empty()) n.inputs.push_back(residual);
    erase_node(o, d.id);
    o.tensors.erase(t);
  }
  validate(o);
  return o;
}

}  // namespace dpuc::graph
