#pragma once

// Abstract accelerator: three on-chip feature-map memories, a parameter
// memory and four in-order instruction queues (LOAD, SAVE, CONV, MISC).

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dpuc/util.hpp"

namespace dpuc::hw {

struct MachineConfig {
  int fm_memories = 3;
  int fm_banks = 8;
  int fm_bank_rows = 512;
  int fm_row_bytes = 64;
  int64_t pm_bytes = 64 * 1024;
  int64_t gamma = 8192;  // longest row vector (w * c bytes) one tile may hold
  int h_conv = 8;
  int h_pool = 2;
  int h_eltwise = 2;
  int64_t ddr_bytes_per_cycle = 16;
  int64_t conv_macs_per_cycle = 1024;
  int64_t misc_elems_per_cycle = 64;
  int64_t issue_overhead = 4;

  int64_t fm_bytes() const { return int64_t{fm_banks} * fm_bank_rows * fm_row_bytes; }
  void validate() const;
  bool operator==(const MachineConfig&) const = default;
};

MachineConfig config_from_json(std::string_view text);
std::string to_json(const MachineConfig& cfg);
MachineConfig load_config(const std::string& path);

enum class OpType : uint8_t { Load = 0, Save = 1, Conv = 2, Misc = 3 };
inline constexpr int kNumQueues = 4;
inline constexpr std::array<OpType, 4> kAllTypes{OpType::Load, OpType::Save, OpType::Conv, OpType::Misc};

std::string_view to_string(OpType t);

// Set of queue types. Printed as four bits LOAD SAVE CONV MISC, MSB first.
struct TypeSet {
  uint8_t bits = 0;
  static constexpr uint8_t bit(OpType t) { return static_cast<uint8_t>(1u << (3 - static_cast<int>(t))); }
  bool has(OpType t) const { return bits & bit(t); }
  void add(OpType t) { bits |= bit(t); }
  bool empty() const { return bits == 0; }
  bool operator==(const TypeSet&) const = default;
};

enum class SubOp : uint8_t { Act, Weight, Conv, MaxPool, Eltwise, Move, Upsample, Noop };
std::string_view to_string(SubOp s);

enum class Space : uint8_t { None, Ddr, Fm, Pm };

// A strided window into a memory. Element (r, c, k) lives at
//   base + wrap(offset + r * row_pitch + c * pix_pitch + k)
// where wrap is modulo `size` for ring buffers (size > 0) and the identity
// otherwise.
struct Operand {
  Space space = Space::None;
  int mem = 0;
  int64_t base = 0;
  int64_t size = 0;
  int64_t offset = 0;
  int64_t row_pitch = 0;
  int64_t pix_pitch = 0;

  int64_t at(int64_t r, int64_t c, int64_t k) const {
    int64_t rel = offset + r * row_pitch + c * pix_pitch + k;
    if (size > 0) rel = ((rel % size) + size) % size;
    return base + rel;
  }
  bool operator==(const Operand&) const = default;
};

struct Instruction {
  OpType type = OpType::Load;
  SubOp sub = SubOp::Act;
  TypeSet dpon, dpby;
  Operand src, src2, dst, wgt, bias;
  int rows = 0, cols = 0, ch = 0;           // block written (or moved)
  int in_rows = 0, in_cols = 0, in_ch = 0;  // block read by window ops
  int kh = 1, kw = 1, sh = 1, sw = 1;
  int org_h = 0, org_w = 0;  // window origin of output (0,0) inside the read block
  int shift = 0;             // result right shift
  int shift_a = 0, shift_b = 0;
  int factor = 1;
  bool relu = false;
  bool init = false;  // first convolution of a weight slab

  bool is_noop() const { return sub == SubOp::Noop; }
  bool operator==(const Instruction&) const = default;
};

struct Segment {
  std::string name;
  int64_t base = 0, size = 0;
  bool operator==(const Segment&) const = default;
};

// Where a graph input/output tensor sits in DDR.
struct TensorPlacement {
  std::string name;
  std::string role;  // "input" or "output"
  int64_t base = 0;
  int h = 0, w = 0, c = 0;
  int64_t row_pitch = 0, pix_pitch = 0;
  int exp = 0;
  bool operator==(const TensorPlacement&) const = default;
};

struct Program {
  std::vector<Segment> segments;
  std::vector<TensorPlacement> tensors;
  std::vector<Instruction> code;
  int64_t ddr_bytes() const;
  const Segment& segment(const std::string& name) const;
  bool operator==(const Program&) const = default;
};

// Cycles an instruction occupies its queue.
int64_t instruction_cost(const Instruction& ins, const MachineConfig& cfg);
int64_t work_units(const Instruction& ins);

// Visual class of an instruction in timelines.
std::string_view color_class(const Instruction& ins);

std::string emit_assembly(const Program& p);
Program parse_assembly(std::string_view text);

}  // namespace dpuc::hw
