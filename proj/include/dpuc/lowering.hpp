#pragma once

// Tiling of one graph node: width chunks, row bands and weight slabs, plus
// fusion planning and the sub-kernel decomposition of deconvolutions.

#include <string>
#include <vector>

#include "dpuc/graph.hpp"
#include "dpuc/hw.hpp"

namespace dpuc::lower {

// Half-open index range.
struct Range {
  int lo = 0, hi = 0;
  int size() const { return hi - lo; }
  bool operator==(const Range&) const = default;
};

// Input indices read by outputs [out.lo, out.hi) of a window op along one
// axis, clamped to [0, in_extent).
Range receptive(Range out, int k, int s, int p, int in_extent);

// Geometry of a sliding-window op. Eltwise and data moves use a 1x1 window.
struct OpGeom {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  graph::Window win;
};

struct TileNode {
  enum class Axis { Root, W, H, Weights };
  Axis axis = Axis::Root;
  Range out_rows, out_cols, out_ch;
  Range in_rows, in_cols;
  hw::OpType unit = hw::OpType::Conv;
  std::vector<TileNode> children;
  std::vector<int> instrs;  // leaves: indices into the node's instruction list
  bool leaf() const { return children.empty(); }
};

// Output column chunks so that every row vector (w * c bytes) of input and
// output fits gamma. Each child carries its receptive input columns.
TileNode w_split(const OpGeom& g, const hw::MachineConfig& cfg);

// Row bands of `preferred_h` output rows (reduced until the double-buffered
// input footprint fits one feature-map memory).
TileNode h_split(const OpGeom& g, Range out_cols, int preferred_h, const hw::MachineConfig& cfg);

int64_t fm_row_pitch(int64_t row_bytes, const hw::MachineConfig& cfg);

std::string to_json(const TileNode& t);

struct FusionPlan {
  bool enabled = false;
  int conv_h = 0;           // conv output rows per steady tile
  int consumer_h = 0;       // consumer input rows per consumer instruction
  int consumer_out_h = 0;   // consumer output rows per consumer instruction
  int k = 0;                // consumer instructions per conv tile
  int footprint = 0;        // conv rows one consumer instruction reads
  std::string reason;
};

// Steady-state rate matching of a conv with its fused consumer (maxpool
// window `pool`, or eltwise-add when `consumer` is EltwiseAdd).
FusionPlan plan_fusion(const OpGeom& conv, graph::OpKind consumer, const graph::Window& pool,
                       const hw::MachineConfig& cfg);

// One output phase of a stride-s deconvolution computed as a small conv over
// the un-upsampled input.
struct PhaseKernel {
  int phase_h = 0, phase_w = 0;
  std::vector<int> taps_h, taps_w;  // kernel rows/cols used, ascending
  int off_h = 0, off_w = 0;         // input index of tap 0 for phase output 0
  int out_h = 0, out_w = 0;         // outputs of this phase
  std::vector<int8_t> weights;      // (c_o, |taps_h|, |taps_w|, c_i)
};

std::vector<PhaseKernel> decompose_deconv(const graph::WeightSpec& w, int stride, int pad, int in_h, int in_w);

struct WeightSlab {
  Range co;
  int64_t weight_bytes = 0;
  int64_t bias_bytes = 0;
  int64_t bytes() const { return weight_bytes + bias_bytes; }
};

// Output-channel slabs each fitting the parameter memory (half of it when
// more than one slab is needed, so the next slab can stream in).
std::vector<WeightSlab> weight_tiling(const graph::WeightSpec& w, const hw::MachineConfig& cfg);

OpGeom conv_geometry(const graph::Graph& g, const graph::Node& n);

}  // namespace dpuc::lower
