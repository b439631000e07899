#pragma once

// Reference executor, functional machine model, event-driven timing model,
// hazard checker and timeline rendering.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpuc/graph.hpp"
#include "dpuc/hw.hpp"

namespace dpuc::sim {

struct Tensor {
  graph::Shape shape;
  int exp = 0;
  std::vector<int8_t> data;  // (h, w, c), channel innermost
  int8_t& at(int h, int w, int c) { return data[(size_t(h) * shape.w + w) * shape.c + c]; }
  int8_t at(int h, int w, int c) const { return data[(size_t(h) * shape.w + w) * shape.c + c]; }
  bool operator==(const Tensor&) const = default;
};

using TensorMap = std::map<std::string, Tensor>;

// Uniform random int8 data for every graph input.
TensorMap random_inputs(const graph::Graph& g, uint64_t seed);

// Direct evaluation of the graph (folded, fused or not). Returns every int8
// activation tensor, graph outputs included.
TensorMap reference_execute(const graph::Graph& g, const TensorMap& inputs);

struct MachineState {
  std::vector<uint8_t> ddr;
  std::vector<std::vector<uint8_t>> fm;
  std::vector<uint8_t> pm;
  // written-byte masks for use-before-definition checks
  std::vector<uint8_t> ddr_def;
  std::vector<std::vector<uint8_t>> fm_def;
  std::vector<uint8_t> pm_def;
};

MachineState make_state(const hw::Program& p, const hw::MachineConfig& cfg, const std::vector<uint8_t>& params);
void write_inputs(MachineState& st, const hw::Program& p, const TensorMap& inputs);
TensorMap read_outputs(const MachineState& st, const hw::Program& p);

// Executes instructions in issue order. Throws UseBeforeDefError and
// OutOfBoundsError.
void run_functional(const hw::Program& p, MachineState& st);

// Compile-free convenience: state from params, inputs in, outputs out.
TensorMap execute_program(const hw::Program& p, const hw::MachineConfig& cfg, const std::vector<uint8_t>& params,
                          const TensorMap& inputs);

struct Event {
  int index = 0;
  hw::OpType queue = hw::OpType::Load;
  hw::SubOp sub = hw::SubOp::Act;
  int64_t issue = 0, start = 0, end = 0;
  std::string color;
};

struct Trace {
  std::vector<Event> events;  // program order
  int64_t makespan = 0;
  std::array<int64_t, hw::kNumQueues> busy{};
  double utilization(hw::OpType q) const;
};

// Four in-order queues; an instruction waiting on type U consumes the next
// unmatched completion token U produced for its queue. Throws DeadlockError
// when waits can never be satisfied.
Trace run_timing(const hw::Program& p, const hw::MachineConfig& cfg);

std::string to_json(const Trace& t);
Trace trace_from_json(std::string_view text);

struct Hazard {
  std::string kind;  // raw, war, waw, overlap, port
  int instr = -1, other = -1;
  std::string detail;
};

// Cross-checks the program against a trace: every on-chip byte access must
// respect issue-order data dependencies in time, and no feature-map memory
// may serve two reads or two writes at once.
std::vector<Hazard> check_hazards(const hw::Program& p, const Trace& t, const hw::MachineConfig& cfg);

std::string timeline_svg(const Trace& t);

}  // namespace dpuc::sim
