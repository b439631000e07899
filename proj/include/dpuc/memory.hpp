#pragma once

// DDR layout of graph tensors and parameters, buffer liveness, ring
// allocation in feature-map memories, and memory role assignment.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dpuc/graph.hpp"
#include "dpuc/hw.hpp"

namespace dpuc::mem {

inline constexpr int64_t kDdrAlign = 64;
inline constexpr int64_t kInstrBytes = 32;

struct Placement {
  std::string segment;
  int64_t base = 0;  // absolute DDR address of element (0, 0, 0)
  int h = 0, w = 0, c = 0;
  int64_t row_pitch = 0, pix_pitch = 0;
  int exp = 0;
  std::string view_of;  // concat output this tensor is a channel slice of
  hw::Operand operand() const;
};

struct DdrLayout {
  std::vector<hw::Segment> segments;  // inputs, outputs, parameters, swap, instructions
  std::map<std::string, Placement> tensors;
  std::map<int, int64_t> params;  // node id -> base of its parameter block
  const hw::Segment& segment(const std::string& name) const;
  int64_t total() const;
};

// Bytes of the parameter block of a compute node: weights then int32 bias.
int64_t param_block_bytes(const graph::Node& n);

// Places graph inputs, outputs and intermediates (fused intermediates too)
// in their segments. Concat inputs become channel views of the concat
// output. `instructions` sizes the instruction segment.
DdrLayout ddr_layout(const graph::Graph& g, int64_t instructions);

struct Access {
  int step = 0;
  std::vector<int> reads, writes;
};

struct LiveRange {
  int first = -1;  // step of the first write
  int last = -1;   // step of the last read (first if never read)
  bool dead = false;
};

// Throws UseBeforeDefError when a slice is read before any write.
std::vector<LiveRange> compute_liveness(int num_slices, const std::vector<Access>& ops);

struct CircularAlloc {
  int mem = 0;
  int64_t start = 0, length = 0;
  bool wrap = false;
};

// Bump allocation of `slices` (in order) inside a ring of `capacity` bytes.
// A slice may wrap around the ring end but never overlaps a slice that is
// still live when it is written (OutOfMemoryError otherwise).
std::vector<CircularAlloc> allocate_circular(const std::vector<int>& slices, const std::vector<int64_t>& sizes,
                                             const std::vector<LiveRange>& live, int mem, int64_t capacity);

struct RingUse {
  int writer = 0;             // stage writing the ring
  std::vector<int> readers;   // stages reading it
};

struct FmAssignment {
  std::vector<int> mem;                     // per ring
  std::vector<std::pair<int, int>> serial;  // stage pairs that must not overlap
};

// Maps rings to feature-map memories so concurrent stages never share a
// read port or a write port. Conv/misc collisions are resolved by
// serializing the two stages; any other collision is a PortConflictError.
FmAssignment assign_fm_memories(const std::vector<RingUse>& rings, int memories);

}  // namespace dpuc::mem
