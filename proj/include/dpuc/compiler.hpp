#pragma once

#include <string>
#include <vector>

#include "dpuc/codegen.hpp"
#include "dpuc/graph.hpp"
#include "dpuc/hw.hpp"
#include "dpuc/memory.hpp"

namespace dpuc {

struct CompileOptions {
  bool pipelined = true;
  bool fuse = true;
  bool deconv_series = true;
  int schedule_budget = 4;
};

struct RingPlacement {
  std::string name;
  hw::Space space = hw::Space::Fm;
  int mem = 0;
  int64_t base = 0, capacity = 0;
  int slices = 0;
};

struct NodeReport {
  int id = 0;
  std::string op, strategy;
  int tiles = 0, chunks = 0, bands = 0, slabs = 0;
  int first_instr = 0, num_instrs = 0;
  std::vector<std::string> attempts;  // failed lowering attempts
  std::vector<RingPlacement> rings;
  lower::TileNode tree;  // leaf instruction indices are program positions
};

struct CompileArtifacts {
  graph::Graph graph;  // after folding, rewrites and fusion
  graph::Schedule schedule;
  mem::DdrLayout layout;
  hw::Program program;
  std::vector<uint8_t> params;
  std::vector<NodeReport> nodes;
  std::vector<int> instr_node;   // node id per instruction
  std::vector<int> instr_group;  // pipeline group per instruction
  std::vector<int> instr_tile;   // tile of its node per instruction, -1 for no-ops
  std::vector<std::string> schedule_failures;
  int64_t makespan = 0;

  std::string tiles_json() const;
  std::string memmap_json() const;
  std::string report_json() const;
};

// Graph rewrites applied before lowering: deconvolutions that cannot use
// the sub-kernel series become upsample + conv; concat inputs that cannot
// be written in place get an identity copy.
graph::Graph prepare_graph(const graph::Graph& g, const hw::MachineConfig& cfg, const CompileOptions& opt);

CompileArtifacts compile(const graph::Graph& g, const hw::MachineConfig& cfg, const CompileOptions& opt = {});

void write_artifacts(const CompileArtifacts& a, const std::string& dir, bool with_tiles);

}  // namespace dpuc
