#include <cmath>
#include <cstring>

#include "dpuc/graph.hpp"
#include "json.hpp"

namespace dpuc::graph {

using nlohmann::json;

namespace {

QuantInfo quant_from(const json& j) {
  QuantInfo q;
  q.lo = j.at("lo").get<double>();
  q.hi = j.at("hi").get<double>();
  q.step = j.at("step").get<double>();
  return q;
}

json quant_to(const QuantInfo& q) { return {{"lo", q.lo}, {"hi", q.hi}, {"step", q.step}}; }

QuantInfo int8_quant(int exponent) {
  const double step = std::ldexp(1.0, exponent);
  return {-128 * step, 127 * step, step};
}

std::vector<int32_t> decode_values(const std::string& b64, DType dtype) {
  auto bytes = base64_decode(b64);
  std::vector<int32_t> v;
  if (dtype == DType::Int8) {
    v.reserve(bytes.size());
    for (uint8_t b : bytes) v.push_back(static_cast<int8_t>(b));
  } else {
    if (bytes.size() % 4) throw ParseError("int32 payload length is not a multiple of 4");
    for (size_t i = 0; i < bytes.size(); i += 4)
      v.push_back(static_cast<int32_t>(uint32_t(bytes[i]) | uint32_t(bytes[i + 1]) << 8 | uint32_t(bytes[i + 2]) << 16 |
                                       uint32_t(bytes[i + 3]) << 24));
  }
  return v;
}

std::string encode_values(const std::vector<int32_t>& v, DType dtype) {
  std::vector<uint8_t> bytes;
  for (int32_t x : v) {
    if (dtype == DType::Int8) {
      bytes.push_back(static_cast<uint8_t>(static_cast<int8_t>(x)));
    } else {
      const auto u = static_cast<uint32_t>(x);
      for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<uint8_t>(u >> s));
    }
  }
  return base64_encode(bytes);
}

std::pair<int, int> pair_of(const json& attrs, const char* key, int def) {
  if (!attrs.contains(key)) return {def, def};
  const auto& a = attrs.at(key);
  if (a.is_number_integer()) return {a.get<int>(), a.get<int>()};
  if (!a.is_array() || a.size() != 2) throw ParseError(std::string("attribute '") + key + "' must be an int or a pair");
  return {a[0].get<int>(), a[1].get<int>()};
}

Window window_from(const json& a) {
  Window w;
  std::tie(w.kh, w.kw) = pair_of(a, "kernel", 1);
  std::tie(w.sh, w.sw) = pair_of(a, "stride", 1);
  std::tie(w.ph, w.pw) = pair_of(a, "pad", 0);
  return w;
}

json window_to(const Window& w) {
  return {{"kernel", {w.kh, w.kw}}, {"stride", {w.sh, w.sw}}, {"pad", {w.ph, w.pw}}};
}

TensorRef tensor_from(const json& j) {
  TensorRef t;
  t.name = j.at("name").get<std::string>();
  if (j.contains("dtype")) {
    auto d = j.at("dtype").get<std::string>();
    if (d == "int8") t.dtype = DType::Int8;
    else if (d == "int32") t.dtype = DType::Int32;
    else throw ParseError("tensor '" + t.name + "': unknown dtype " + d);
  }
  if (j.contains("dims")) {
    t.dims = j.at("dims").get<std::vector<int>>();
    if (t.dims.empty()) throw ParseError("tensor '" + t.name + "': empty dims");
  } else {
    auto s = j.at("shape").get<std::vector<int>>();
    if (s.size() != 3) throw ParseError("tensor '" + t.name + "': shape must be [h, w, c]");
    t.shape = {s[0], s[1], s[2]};
  }
  if (j.contains("quant")) t.quant = quant_from(j.at("quant"));
  else if (t.dtype == DType::Int8) throw ParseError("tensor '" + t.name + "': int8 tensor needs quant");
  return t;
}

json tensor_to(const TensorRef& t) {
  json j{{"name", t.name}};
  if (t.is_param()) j["dims"] = t.dims;
  else j["shape"] = {t.shape.h, t.shape.w, t.shape.c};
  j["dtype"] = t.dtype == DType::Int8 ? "int8" : "int32";
  if (t.dtype == DType::Int8 || t.is_param()) j["quant"] = quant_to(t.quant);
  return j;
}

Node node_from(const json& j, const Graph& g) {
  Node n;
  n.id = j.at("id").get<int>();
  n.name = j.value("name", "");
  n.op = op_kind_from_string(j.at("op").get<std::string>());
  n.inputs = j.value("inputs", std::vector<std::string>{});
  n.output = j.at("output").get<std::string>();
  const json attrs = j.value("attrs", json::object());
  n.win = window_from(attrs);
  n.relu = attrs.value("relu", false);
  if (n.op == OpKind::Upsample) n.factor = attrs.value("factor", 2);
  if (n.op == OpKind::Deconv) {
    n.factor = n.win.sh;
    if (n.win.sh != n.win.sw) throw ParseError("deconv node " + std::to_string(n.id) + ": stride must be square");
    n.win.sh = n.win.sw = 1;
  }
  if (n.op == OpKind::Param) {
    const auto& t = g.tensor(n.output);
    n.constant = ParamData{decode_values(j.at("params").at("data").get<std::string>(), t.dtype)};
  } else if (j.contains("params")) {
    const json& p = j.at("params");
    WeightSpec w;
    auto dims = p.at("dims").get<std::vector<int>>();
    if (dims.size() != 4) throw ParseError("node " + std::to_string(n.id) + ": weight dims must be (c_o, k_h, k_w, c_i)");
    w.co = dims[0], w.kh = dims[1], w.kw = dims[2], w.ci = dims[3];
    for (int32_t v : decode_values(p.at("weights").get<std::string>(), DType::Int8)) w.weights.push_back(static_cast<int8_t>(v));
    if (static_cast<int64_t>(w.weights.size()) != int64_t{w.co} * w.kh * w.kw * w.ci)
      throw ShapeError("node " + std::to_string(n.id) + ": weight payload size mismatch");
    w.weight_exp = quant_from(p.at("weight_quant")).exponent();
    if (p.contains("bias")) {
      w.bias = decode_values(p.at("bias").get<std::string>(), DType::Int32);
      if (static_cast<int>(w.bias.size()) != w.co) throw ShapeError("node " + std::to_string(n.id) + ": bias size mismatch");
      w.bias_exp = quant_from(p.at("bias_quant")).exponent();
    }
    n.params = std::move(w);
  }
  if (j.contains("fused")) {
    const json& f = j.at("fused");
    FusedConsumer fc;
    fc.kind = op_kind_from_string(f.at("op").get<std::string>());
    if (fc.kind != OpKind::MaxPool && fc.kind != OpKind::EltwiseAdd)
      throw ParseError("node " + std::to_string(n.id) + ": only maxpool and eltwise-add can be fused");
    fc.pool = window_from(f);
    fc.relu = f.value("relu", false);
    fc.intermediate = tensor_from(f.at("intermediate"));
    n.fused = std::move(fc);
  }
  return n;
}

json node_to(const Node& n, const Graph& g) {
  json j{{"id", n.id}, {"op", to_string(n.op)}, {"inputs", n.inputs}, {"output", n.output}};
  if (!n.name.empty()) j["name"] = n.name;
  json attrs = json::object();
  switch (n.op) {
    case OpKind::Conv:
    case OpKind::MaxPool:
      attrs = window_to(n.win);
      break;
    case OpKind::Deconv: {
      Window w = n.win;
      w.sh = w.sw = n.factor;
      attrs = window_to(w);
      break;
    }
    case OpKind::Upsample:
      attrs["factor"] = n.factor;
      break;
    default:
      break;
  }
  if (n.relu) attrs["relu"] = true;
  if (!attrs.empty()) j["attrs"] = attrs;
  if (n.constant) j["params"] = {{"data", encode_values(n.constant->values, g.tensor(n.output).dtype)}};
  if (n.params) {
    const auto& w = *n.params;
    std::vector<int32_t> wv(w.weights.begin(), w.weights.end());
    json p{{"dims", {w.co, w.kh, w.kw, w.ci}}, {"weights", encode_values(wv, DType::Int8)}, {"weight_quant", quant_to(int8_quant(w.weight_exp))}};
    if (!w.bias.empty()) {
      p["bias"] = encode_values(w.bias, DType::Int32);
      p["bias_quant"] = quant_to(int8_quant(w.bias_exp));
    }
    j["params"] = p;
  }
  if (n.fused) {
    json f = window_to(n.fused->pool);
    f["op"] = to_string(n.fused->kind);
    if (n.fused->relu) f["relu"] = true;
    f["intermediate"] = tensor_to(n.fused->intermediate);
    j["fused"] = f;
  }
  return j;
}

}  // namespace

Graph parse_graph(std::string_view text) {
  Graph g;
  try {
    const json doc = json::parse(text);
    for (auto& t : doc.at("tensors")) {
      auto ref = tensor_from(t);
      auto name = ref.name;
      if (!g.tensors.emplace(name, std::move(ref)).second) throw ParseError("duplicate tensor '" + name + "'");
    }
    for (auto& n : doc.at("nodes")) g.nodes.push_back(node_from(n, g));
    g.inputs = doc.at("inputs").get<std::vector<std::string>>();
    g.outputs = doc.at("outputs").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed graph document: ") + e.what());
  }
  validate(g);
  return g;
}

std::string to_json(const Graph& g) {
  json doc;
  doc["tensors"] = json::array();
  for (auto& [name, t] : g.tensors) doc["tensors"].push_back(tensor_to(t));
  doc["nodes"] = json::array();
  for (auto& n : g.nodes) doc["nodes"].push_back(node_to(n, g));
  doc["inputs"] = g.inputs;
  doc["outputs"] = g.outputs;
  return doc.dump(1);
}

}  // namespace dpuc::graph
