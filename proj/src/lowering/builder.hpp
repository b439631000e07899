#pragma once

#include <map>

#include "dpuc/codegen.hpp"

namespace dpuc::lower::detail {

struct Builder {
  NodeCode& code;
  const hw::MachineConfig& cfg;
  int tile = -1;
  std::vector<int>* leaf = nullptr;

  int ring(std::string name, int writer, std::vector<int> readers, hw::Space space = hw::Space::Fm) {
    code.rings.push_back({std::move(name), space, writer, std::move(readers)});
    return static_cast<int>(code.rings.size()) - 1;
  }
  int slice(int ring, int64_t bytes) {
    code.slices.push_back({ring, bytes});
    return static_cast<int>(code.slices.size()) - 1;
  }
  void begin_tile() {
    code.tiles.emplace_back();
    tile = static_cast<int>(code.tiles.size()) - 1;
  }
  int emit(int stage, SymInstr s) {
    s.ins.type = pipe::queue_of(stage);
    code.instrs.push_back(std::move(s));
    const int idx = static_cast<int>(code.instrs.size()) - 1;
    code.tiles.at(tile).items[stage].push_back(idx);
    if (leaf) leaf->push_back(idx);
    return idx;
  }
  int64_t pitch(int64_t row_bytes) const { return fm_row_pitch(row_bytes, cfg); }
};

inline hw::Operand fm_operand(int64_t inner, int64_t row_pitch, int64_t pix_pitch, hw::Space space = hw::Space::Fm) {
  hw::Operand o;
  o.space = space;
  o.offset = inner;
  o.row_pitch = row_pitch;
  o.pix_pitch = pix_pitch;
  return o;
}

inline hw::Operand& slot_ref(hw::Instruction& ins, Slot s) {
  switch (s) {
    case kSrc: return ins.src;
    case kSrc2: return ins.src2;
    case kDst: return ins.dst;
    case kWgt: return ins.wgt;
    default: return ins.bias;
  }
}

inline void bind_slice(SymInstr& s, Slot slot, int slice, hw::Operand op, bool write) {
  slot_ref(s.ins, slot) = op;
  s.slice[slot] = slice;
  auto& list = write ? s.writes : s.reads;
  if (std::find(list.begin(), list.end(), slice) == list.end()) list.push_back(slice);
}

inline hw::Operand ddr_at(const mem::Placement& p, int r, int c, int k) {
  hw::Operand o = p.operand();
  o.offset = int64_t{r} * p.row_pitch + int64_t{c} * p.pix_pitch + k;
  return o;
}

// Rows of one feature map streamed through a ring. Row r of the map lives at
// (slice, inner offset); consecutive slices of the ring are adjacent.
struct RowRing {
  Builder* b = nullptr;
  int ring = -1;
  int64_t pitch = 0;
  int pix = 0;
  int next = 0;
  std::map<int, std::pair<int, int64_t>> at;
  std::vector<int> order;

  RowRing() = default;
  RowRing(Builder& builder, int ring_id, int64_t row_bytes, int pix_pitch)
      : b(&builder), ring(ring_id), pitch(builder.pitch(row_bytes)), pix(pix_pitch) {}

  void reset() {
    at.clear();
    next = 0;
  }
  // New slice for rows [lo, hi).
  int add(int lo, int hi) {
    if (lo < next) throw Error("internal: rows produced out of order");
    const int s = b->slice(ring, int64_t{hi - lo} * pitch);
    for (int r = lo; r < hi; ++r) at[r] = {s, int64_t{r - lo} * pitch};
    order.push_back(s);
    next = hi;
    return s;
  }
  bool has(int r) const { return at.count(r) > 0; }
  hw::Operand operand(int row) const { return fm_operand(at.at(row).second, pitch, pix); }

  void bind(SymInstr& s, Slot slot, int lo, int hi) const {
    for (int r = lo; r < hi; ++r) {
      auto it = at.find(r);
      if (it == at.end()) throw Error("internal: row " + std::to_string(r) + " not resident");
      if (r > lo) {
        auto [ps, pi] = at.at(r - 1);
        auto [cs, ci] = it->second;
        const bool same = cs == ps && ci == pi + pitch;
        const bool next_slice = ci == 0 && pi + pitch == b->code.slices[ps].bytes && adjacent(ps, cs);
        if (!same && !next_slice) throw Error("internal: rows not contiguous in ring");
      }
      bind_slice(s, slot, it->second.first, operand(lo), false);
    }
    s.slice[slot] = at.at(lo).first;
  }
  void write(SymInstr& s, Slot slot, int row) const { bind_slice(s, slot, at.at(row).first, operand(row), true); }

 private:
  bool adjacent(int a, int c) const {
    for (size_t i = 0; i + 1 < order.size(); ++i)
      if (order[i] == a) return order[i + 1] == c;
    return false;
  }
};

// LOADs rows [lo, hi) of a DDR tensor region not already in `rr`, one LOAD
// per row, into a fresh slice.
inline void load_rows(Builder& b, RowRing& rr, const mem::Placement& p, int lo, int hi, Range cols, Range ch) {
  lo = std::max(lo, rr.next);
  if (lo >= hi) return;
  rr.add(lo, hi);
  for (int r = lo; r < hi; ++r) {
    SymInstr s;
    s.ins.sub = hw::SubOp::Act;
    s.ins.src = ddr_at(p, r, cols.lo, ch.lo);
    s.ins.rows = 1, s.ins.cols = cols.size(), s.ins.ch = ch.size();
    rr.write(s, kDst, r);
    b.emit(pipe::kL, std::move(s));
  }
}

// SAVE of one row held in `rr` to a DDR tensor region.
inline void save_row(Builder& b, const RowRing& rr, int row, const mem::Placement& p, int out_row, Range cols, Range ch) {
  SymInstr s;
  s.ins.sub = hw::SubOp::Act;
  rr.bind(s, kSrc, row, row + 1);
  s.ins.dst = ddr_at(p, out_row, cols.lo, ch.lo);
  s.ins.rows = 1, s.ins.cols = cols.size(), s.ins.ch = ch.size();
  b.emit(pipe::kS, std::move(s));
}

void lower_conv(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt);
void lower_deconv(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt);
void lower_pool(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt);
void lower_rowwise(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt);

}  // namespace dpuc::lower::detail
