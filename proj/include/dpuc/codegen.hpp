#pragma once

// Lowering of one graph node to per-tile stage sequences. Feature-map and
// parameter buffers are symbolic slices of rings; the compiler allocates
// them once the pipelined schedule fixes their lifetimes.

#include <array>
#include <string>
#include <vector>

#include "dpuc/graph.hpp"
#include "dpuc/hw.hpp"
#include "dpuc/lowering.hpp"
#include "dpuc/memory.hpp"
#include "dpuc/pipeline.hpp"

namespace dpuc::lower {

struct RingSpec {
  std::string name;
  hw::Space space = hw::Space::Fm;
  int writer = pipe::kL;
  std::vector<int> readers;
};

struct SliceSpec {
  int ring = 0;
  int64_t bytes = 0;
};

enum Slot : int { kSrc, kSrc2, kDst, kWgt, kBias, kNumSlots };

struct SymInstr {
  hw::Instruction ins;
  std::array<int, kNumSlots> slice{-1, -1, -1, -1, -1};
  std::vector<int> reads, writes;
};

struct NodeCode {
  std::vector<RingSpec> rings;
  std::vector<SliceSpec> slices;
  std::vector<SymInstr> instrs;
  std::vector<pipe::StageSeq> tiles;
  std::vector<uint8_t> params;  // parameter block, placed at the node's DDR parameter base
  TileNode tree;
  int chunks = 0, bands = 0, slabs = 0;
  std::string strategy;
};

struct LowerOptions {
  int h_conv = 8, h_pool = 2, h_eltwise = 2;
  int64_t gamma = 8192;
  static LowerOptions from(const hw::MachineConfig& cfg);
};

// Machine config with the tiling knobs of `opt` applied.
hw::MachineConfig tuned(const hw::MachineConfig& cfg, const LowerOptions& opt);

NodeCode lower_node(const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const hw::MachineConfig& cfg,
                    const LowerOptions& opt);

}  // namespace dpuc::lower
