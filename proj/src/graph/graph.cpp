#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "dpuc/graph.hpp"

namespace dpuc::graph {

int QuantInfo::exponent() const {
  int e = 0;
  const double m = std::frexp(step, &e);
  // frexp gives step = m * 2^e with m in [0.5, 1); powers of two have m == 0.5.
  if (m != 0.5) throw ParseError("quantization step " + std::to_string(step) + " is not a power of two");
  return e - 1;
}

int64_t TensorRef::bytes() const {
  const int64_t unit = dtype == DType::Int32 ? 4 : 1;
  if (is_param()) {
    int64_t n = 1;
    for (int d : dims) n *= d;
    return n * unit;
  }
  return shape.elems() * unit;
}

namespace {
constexpr std::pair<OpKind, std::string_view> kOpNames[] = {
    {OpKind::Input, "input"},           {OpKind::Param, "param"},       {OpKind::FixNeuron, "fixneuron"},
    {OpKind::Conv, "conv"},             {OpKind::MaxPool, "maxpool"},   {OpKind::EltwiseAdd, "eltwise-add"},
    {OpKind::Upsample, "upsample"},     {OpKind::Deconv, "deconv"},     {OpKind::Identity, "identity"},
    {OpKind::Concat, "concat"},
};
}  // namespace

std::string_view to_string(OpKind k) {
  for (auto& [kind, name] : kOpNames)
    if (kind == k) return name;
  return "?";
}

OpKind op_kind_from_string(std::string_view s) {
  for (auto& [kind, name] : kOpNames)
    if (name == s) return kind;
  throw ParseError("unknown op '" + std::string(s) + "'");
}

const TensorRef& Graph::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ParseError("unknown tensor '" + name + "'");
  return it->second;
}

const Node& Graph::node(int id) const {
  for (auto& n : nodes)
    if (n.id == id) return n;
  throw ParseError("unknown node id " + std::to_string(id));
}

Node& Graph::node(int id) { return const_cast<Node&>(std::as_const(*this).node(id)); }

int Graph::producer_index(const std::string& t) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].output == t) return static_cast<int>(i);
  return -1;
}

std::vector<int> Graph::consumers(const std::string& t) const {
  std::vector<int> ids;
  for (auto& n : nodes)
    if (std::find(n.inputs.begin(), n.inputs.end(), t) != n.inputs.end()) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Graph::is_output(const std::string& t) const {
  return std::find(outputs.begin(), outputs.end(), t) != outputs.end();
}

namespace {

int window_out(int in, int k, int s, int p, const char* what) {
  const int span = in + 2 * p - k;
  if (k < 1 || s < 1 || p < 0 || span < 0)
    throw ShapeError(std::string(what) + ": window does not fit input");
  return span / s + 1;
}

std::vector<int> weight_dims(const Graph& g, const Node& n) {
  if (n.params) return {n.params->co, n.params->kh, n.params->kw, n.params->ci};
  if (n.inputs.size() < 2) throw ShapeError("node " + std::to_string(n.id) + " has no weights");
  auto dims = g.tensor(n.inputs[1]).dims;
  if (dims.size() != 4) throw ShapeError("weights of node " + std::to_string(n.id) + " are not 4-D");
  return dims;
}

Shape apply_consumer(const FusedConsumer& f, const Shape& t) {
  if (f.kind == OpKind::MaxPool)
    return {window_out(t.h, f.pool.kh, f.pool.sh, f.pool.ph, "maxpool"),
            window_out(t.w, f.pool.kw, f.pool.sw, f.pool.pw, "maxpool"), t.c};
  return t;
}

}  // namespace

Shape infer_shape(const Graph& g, const Node& n) {
  auto in = [&](size_t i) -> const TensorRef& {
    if (i >= n.inputs.size()) throw ShapeError("node " + std::to_string(n.id) + " is missing input " + std::to_string(i));
    return g.tensor(n.inputs[i]);
  };
  const std::string who = std::string(to_string(n.op)) + " node " + std::to_string(n.id);
  switch (n.op) {
    case OpKind::Input:
    case OpKind::Param:
      return g.tensor(n.output).shape;
    case OpKind::FixNeuron:
    case OpKind::Identity:
      return in(0).shape;
    case OpKind::Conv: {
      const Shape x = in(0).shape;
      auto d = weight_dims(g, n);
      if (d[3] != x.c) throw ShapeError(who + ": weight c_i " + std::to_string(d[3]) + " != input c " + std::to_string(x.c));
      if (d[1] != n.win.kh || d[2] != n.win.kw) throw ShapeError(who + ": weight kernel disagrees with attrs");
      Shape t{window_out(x.h, n.win.kh, n.win.sh, n.win.ph, "conv"), window_out(x.w, n.win.kw, n.win.sw, n.win.pw, "conv"), d[0]};
      if (n.fused) {
        if (n.fused->kind == OpKind::EltwiseAdd && in(1).shape != t) throw ShapeError(who + ": residual shape mismatch");
        return apply_consumer(*n.fused, t);
      }
      return t;
    }
    case OpKind::Deconv: {
      const Shape x = in(0).shape;
      auto d = weight_dims(g, n);
      if (d[3] != x.c) throw ShapeError(who + ": weight c_i mismatch");
      if (n.win.kh != n.win.kw || d[1] != n.win.kh || d[2] != n.win.kw) throw ShapeError(who + ": deconv kernel must be square");
      const int s = n.factor;
      const int ho = x.h * s + 2 * n.win.ph - n.win.kh + 1;
      const int wo = x.w * s + 2 * n.win.pw - n.win.kw + 1;
      if (s < 1 || ho < 1 || wo < 1) throw ShapeError(who + ": empty output");
      return {ho, wo, d[0]};
    }
    case OpKind::MaxPool: {
      const Shape x = in(0).shape;
      if (n.win.ph >= n.win.kh || n.win.pw >= n.win.kw) throw ShapeError(who + ": padding must be smaller than the window");
      return {window_out(x.h, n.win.kh, n.win.sh, n.win.ph, "maxpool"), window_out(x.w, n.win.kw, n.win.sw, n.win.pw, "maxpool"), x.c};
    }
    case OpKind::EltwiseAdd:
      if (n.inputs.size() != 2) throw ShapeError(who + ": needs two inputs");
      if (in(0).shape != in(1).shape) throw ShapeError(who + ": operand shapes differ");
      return in(0).shape;
    case OpKind::Upsample: {
      const Shape x = in(0).shape;
      if (n.factor < 1) throw ShapeError(who + ": factor must be >= 1");
      return {x.h * n.factor, x.w * n.factor, x.c};
    }
    case OpKind::Concat: {
      if (n.inputs.empty()) throw ShapeError(who + ": no inputs");
      Shape out = in(0).shape;
      out.c = 0;
      for (size_t i = 0; i < n.inputs.size(); ++i) {
        const Shape s = in(i).shape;
        if (s.h != out.h || s.w != out.w) throw ShapeError(who + ": spatial shapes differ");
        out.c += s.c;
      }
      return out;
    }
  }
  throw ShapeError(who + ": unhandled op");
}

int64_t mac_count(const Graph& g, const Node& n) {
  if (n.op != OpKind::Conv && n.op != OpKind::Deconv) return 0;
  auto d = weight_dims(g, n);
  Shape out;
  if (n.op == OpKind::Conv) {
    const Shape x = g.tensor(n.inputs[0]).shape;
    out = {window_out(x.h, n.win.kh, n.win.sh, n.win.ph, "conv"), window_out(x.w, n.win.kw, n.win.sw, n.win.pw, "conv"), d[0]};
  } else {
    out = infer_shape(g, n);
  }
  return out.elems() * d[1] * d[2] * d[3];
}

namespace {

void check_quant(const TensorRef& t) {
  if (t.dtype != DType::Int8) return;
  const auto& q = t.quant;
  if (!(q.lo < q.hi) || !(q.step > 0)) throw ParseError("tensor '" + t.name + "': invalid quantization range");
  q.exponent();
  if ((q.hi - q.lo) / q.step > 256.0 + 1e-9)
    throw ParseError("tensor '" + t.name + "': range does not fit 8 bits at the given step");
}

}  // namespace

void validate(const Graph& g) {
  std::set<int> ids;
  std::map<std::string, int> writer;
  for (auto& [name, t] : g.tensors) {
    if (name != t.name) throw ParseError("tensor key mismatch for '" + name + "'");
    if (!t.is_param() && (t.shape.h < 1 || t.shape.w < 1 || t.shape.c < 1))
      throw ShapeError("tensor '" + name + "' has a non-positive dimension");
    for (int d : t.dims)
      if (d < 1) throw ShapeError("tensor '" + name + "' has a non-positive dimension");
    check_quant(t);
  }
  for (auto& n : g.nodes) {
    if (!ids.insert(n.id).second) throw ParseError("duplicate node id " + std::to_string(n.id));
    g.tensor(n.output);
    if (!writer.emplace(n.output, n.id).second) throw ParseError("tensor '" + n.output + "' written twice");
    for (auto& i : n.inputs) g.tensor(i);
    const bool source = n.op == OpKind::Input || n.op == OpKind::Param;
    if (source != n.inputs.empty()) throw ParseError("node " + std::to_string(n.id) + ": wrong number of inputs");
  }
  for (auto& name : g.inputs) {
    auto it = writer.find(name);
    if (it == writer.end() || g.node(it->second).op != OpKind::Input)
      throw ParseError("graph input '" + name + "' is not written by an input node");
  }
  for (auto& n : g.nodes)
    if (n.op == OpKind::Input && std::find(g.inputs.begin(), g.inputs.end(), n.output) == g.inputs.end())
      throw ParseError("input node " + std::to_string(n.id) + " is not listed as a graph input");
  for (auto& name : g.outputs)
    if (!writer.count(name)) throw ParseError("graph output '" + name + "' has no producer");
  for (auto& [name, t] : g.tensors)
    if (!writer.count(name)) throw ParseError("tensor '" + name + "' has no producer");

  // Kahn's algorithm; anything left over sits on a cycle.
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> succ;
  for (auto& n : g.nodes) {
    indeg[n.id];
    for (auto& i : n.inputs) {
      succ[writer.at(i)].push_back(n.id);
      ++indeg[n.id];
    }
  }
  std::queue<int> ready;
  for (auto& [id, d] : indeg)
    if (d == 0) ready.push(id);
  size_t seen = 0;
  while (!ready.empty()) {
    int id = ready.front();
    ready.pop();
    ++seen;
    for (int s : succ[id])
      if (--indeg[s] == 0) ready.push(s);
  }
  if (seen != g.nodes.size()) throw ParseError("graph contains a cycle");

  // Every node must reach a graph output.
  std::set<int> live;
  std::vector<std::string> work(g.outputs.begin(), g.outputs.end());
  while (!work.empty()) {
    auto t = work.back();
    work.pop_back();
    int id = writer.at(t);
    if (!live.insert(id).second) continue;
    for (auto& i : g.node(id).inputs) work.push_back(i);
  }
  for (auto& n : g.nodes)
    if (!live.count(n.id)) throw ParseError("node " + std::to_string(n.id) + " does not reach a graph output");

  for (auto& n : g.nodes) {
    const auto& out = g.tensor(n.output);
    for (auto& i : n.inputs) {
      const auto& t = g.tensor(i);
      const bool needs_int8 = n.op != OpKind::FixNeuron && !(t.is_param() && (n.op == OpKind::Conv || n.op == OpKind::Deconv));
      if (needs_int8 && t.dtype != DType::Int8)
        throw ParseError("node " + std::to_string(n.id) + " reads accumulator tensor '" + i + "' without a quantizer");
    }
    if (n.op == OpKind::Param) {
      if (!n.constant || static_cast<int64_t>(n.constant->values.size()) * (out.dtype == DType::Int32 ? 4 : 1) != out.bytes())
        throw ShapeError("param node " + std::to_string(n.id) + ": data size does not match tensor");
      continue;
    }
    if (n.op == OpKind::FixNeuron) {
      const auto& in = g.tensor(n.inputs[0]);
      if (in.dims != out.dims || (!in.is_param() && in.shape != out.shape))
        throw ShapeError("fixneuron node " + std::to_string(n.id) + ": shape changes");
      continue;
    }
    if (out.dtype == DType::Int32 && n.op != OpKind::Conv && n.op != OpKind::Deconv)
      throw ParseError("only convolutions may produce accumulator tensors");
    if (out.dtype == DType::Int32 && (n.fused || n.op == OpKind::Deconv))
      throw ParseError("node " + std::to_string(n.id) + " cannot produce an accumulator tensor");
    const Shape s = infer_shape(g, n);
    if (s != out.shape)
      throw ShapeError("node " + std::to_string(n.id) + ": declared output " + std::to_string(out.shape.h) + "x" +
                       std::to_string(out.shape.w) + "x" + std::to_string(out.shape.c) + " but computes " +
                       std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c));
    if (n.op == OpKind::MaxPool || n.op == OpKind::Upsample)
      if (g.tensor(n.inputs[0]).quant.step != out.quant.step)
        throw ParseError("node " + std::to_string(n.id) + ": " + std::string(to_string(n.op)) + " cannot change scale");
    if (n.fused && n.fused->kind == OpKind::MaxPool && n.fused->intermediate.quant.step != out.quant.step)
      throw ParseError("node " + std::to_string(n.id) + ": fused maxpool cannot change scale");
  }
}

}  // namespace dpuc::graph
