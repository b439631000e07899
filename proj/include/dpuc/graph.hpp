#pragma once

// Computation DAG: nodes with a single output tensor, int8 activations in
// (h, w, c) layout with the channel innermost, and power-of-two quantization.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dpuc/util.hpp"

namespace dpuc::hw {
struct MachineConfig;
}

namespace dpuc::graph {

struct Shape {
  int h = 1, w = 1, c = 1;
  int64_t elems() const { return int64_t{h} * w * c; }
  bool operator==(const Shape&) const = default;
};

struct QuantInfo {
  double lo = -128, hi = 127, step = 1;
  // log2(step); valid only for power-of-two steps (checked at parse time).
  int exponent() const;
  bool operator==(const QuantInfo&) const = default;
};

enum class DType { Int8, Int32 };
enum class Storage { Unassigned, Ddr, Fm, Pm };

struct TensorRef {
  std::string name;
  Shape shape;
  std::vector<int> dims;  // parameter tensors only: (c_o, k_h, k_w, c_i) or (c_o)
  DType dtype = DType::Int8;
  QuantInfo quant;
  Storage storage = Storage::Unassigned;
  bool is_param() const { return !dims.empty(); }
  int64_t bytes() const;
  bool operator==(const TensorRef&) const = default;
};

enum class OpKind { Input, Param, FixNeuron, Conv, MaxPool, EltwiseAdd, Upsample, Deconv, Identity, Concat };

std::string_view to_string(OpKind k);
OpKind op_kind_from_string(std::string_view s);

struct Window {
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  bool operator==(const Window&) const = default;
};

// Weights W (c_o, k_h, k_w, c_i) and bias B (c_o) as folded into a compute node.
struct WeightSpec {
  int co = 0, kh = 0, kw = 0, ci = 0;
  std::vector<int8_t> weights;
  int weight_exp = 0;
  std::vector<int32_t> bias;  // empty means no bias
  int bias_exp = 0;
  int64_t weight_bytes() const { return static_cast<int64_t>(weights.size()); }
  bool operator==(const WeightSpec&) const = default;
};

// Constant data carried by a parameter node before folding.
struct ParamData {
  std::vector<int32_t> values;
  bool operator==(const ParamData&) const = default;
};

// Consumer folded into a convolution super-node.
struct FusedConsumer {
  OpKind kind = OpKind::MaxPool;  // MaxPool or EltwiseAdd
  Window pool;                    // MaxPool geometry
  bool relu = false;              // EltwiseAdd activation
  TensorRef intermediate;         // conv output consumed in-place
  bool operator==(const FusedConsumer&) const = default;
};

struct Node {
  int id = 0;
  std::string name;
  OpKind op = OpKind::Input;
  std::vector<std::string> inputs;
  std::string output;
  Window win;
  bool relu = false;
  int factor = 1;  // upsample factor; deconv stride
  std::optional<WeightSpec> params;
  std::optional<ParamData> constant;
  std::optional<FusedConsumer> fused;
  bool operator==(const Node&) const = default;
};

struct Graph {
  std::map<std::string, TensorRef> tensors;
  std::vector<Node> nodes;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  const TensorRef& tensor(const std::string& name) const;
  const Node& node(int id) const;
  Node& node(int id);
  // Index into nodes of the producer of `tensor`, or -1.
  int producer_index(const std::string& tensor) const;
  // Ids of nodes that read `tensor`, ascending.
  std::vector<int> consumers(const std::string& tensor) const;
  bool is_output(const std::string& tensor) const;
  bool operator==(const Graph&) const = default;
};

using Schedule = std::vector<int>;

// Expected output shape of a node given its input tensors (ShapeError on mismatch).
Shape infer_shape(const Graph& g, const Node& n);

// Structural validation: single writer, references resolve, acyclic, every
// node connects to an input and an output, shapes consistent.
void validate(const Graph& g);

Graph parse_graph(std::string_view json_text);
std::string to_json(const Graph& g);

Graph fold_constants_and_quantizers(const Graph& g);

// Replaces eligible conv -> maxpool and conv -> eltwise-add pairs by a fused
// super-node (see lowering::plan_fusion for the steady-state test).
Graph fuse_superlayers(const Graph& g, const hw::MachineConfig& cfg);

Schedule topological_schedule(const Graph& g);
bool is_valid_schedule(const Graph& g, const Schedule& s);
int64_t peak_memory(const Graph& g, const Schedule& s);

struct ScheduleEstimate {
  Schedule schedule;
  int64_t peak_bytes = 0;
};
std::vector<ScheduleEstimate> explore_schedules(const Graph& g, int budget);

// Number of multiply-accumulates of a compute node (0 for data movement).
int64_t mac_count(const Graph& g, const Node& n);

}  // namespace dpuc::graph
