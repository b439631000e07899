#include <algorithm>
#include <functional>

#include "dpuc/sim.hpp"

namespace dpuc::sim {

namespace {

using hw::Operand;
using hw::Space;

// memory slot: 0 = DDR, 1 = PM, 2.. = FM memories
int slot_of(const Operand& o) {
  switch (o.space) {
    case Space::Ddr: return 0;
    case Space::Pm: return 1;
    default: return 2 + o.mem;
  }
}

void block(const Operand& o, int rows, int cols, int ch, const std::function<void(int, int64_t)>& f) {
  if (o.space == Space::None) return;
  const int s = slot_of(o);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int k = 0; k < ch; ++k) f(s, o.at(r, c, k));
}

void reads(const hw::Instruction& ins, const std::function<void(int, int64_t)>& f) {
  switch (ins.sub) {
    case hw::SubOp::Noop:
      return;
    case hw::SubOp::Conv:
      block(ins.src, ins.in_rows, ins.in_cols, ins.in_ch, f);
      block(ins.wgt, 1, 1, ins.ch * ins.kh * ins.kw * ins.in_ch, f);
      block(ins.bias, 1, 1, 4 * ins.ch, f);
      return;
    case hw::SubOp::MaxPool:
      block(ins.src, ins.in_rows, ins.in_cols, ins.in_ch, f);
      return;
    case hw::SubOp::Upsample:
      block(ins.src, ins.in_rows, ins.in_cols, ins.ch, f);
      return;
    case hw::SubOp::Eltwise:
      block(ins.src2, ins.rows, ins.cols, ins.ch, f);
      [[fallthrough]];
    default:
      block(ins.src, ins.rows, ins.cols, ins.ch, f);
  }
}

struct ByteState {
  int writer = -1;
  int reader = -1;
  int64_t reader_end = -1;
};

}  // namespace

std::vector<Hazard> check_hazards(const hw::Program& p, const Trace& t, const hw::MachineConfig& cfg) {
  std::vector<Hazard> out;
  std::vector<std::vector<ByteState>> mem(2 + cfg.fm_memories);
  mem[0].resize(p.ddr_bytes());
  mem[1].resize(cfg.pm_bytes);
  for (int m = 0; m < cfg.fm_memories; ++m) mem[2 + m].resize(cfg.fm_bytes());
  auto at = [&](int s, int64_t a) -> ByteState* {
    if (s < 0 || s >= static_cast<int>(mem.size()) || a < 0 || a >= static_cast<int64_t>(mem[s].size())) return nullptr;
    return &mem[s][a];
  };
  auto report = [&](std::string kind, int i, int j, std::string what) {
    for (auto& h : out)
      if (h.kind == kind && h.instr == i && h.other == j) return;
    out.push_back({std::move(kind), i, j, std::move(what)});
  };

  for (int i = 0; i < static_cast<int>(p.code.size()); ++i) {
    const auto& ins = p.code[i];
    const auto& ev = t.events.at(i);
    reads(ins, [&](int s, int64_t a) {
      ByteState* b = at(s, a);
      if (!b) return report("bounds", i, -1, "read outside memory");
      if (b->writer >= 0 && t.events[b->writer].end > ev.start)
        report("raw", i, b->writer, "reads data before its producer completes");
      if (t.events[i].end > b->reader_end) b->reader_end = ev.end, b->reader = i;
    });
    if (ins.is_noop()) continue;
    block(ins.dst, ins.rows, ins.cols, ins.ch, [&](int s, int64_t a) {
      ByteState* b = at(s, a);
      if (!b) return report("bounds", i, -1, "write outside memory");
      if (b->reader >= 0 && b->reader_end > ev.start) report("overlap", i, b->reader, "overwrites a buffer that is still being read");
      if (b->writer >= 0 && t.events[b->writer].end > ev.start) report("waw", i, b->writer, "write overtakes an earlier write");
      b->writer = i;
      b->reader = -1;
      b->reader_end = -1;
    });
  }

  // one read port and one write port per feature-map memory
  for (int m = 0; m < cfg.fm_memories; ++m) {
    for (int dir = 0; dir < 2; ++dir) {
      std::vector<int> users;
      for (int i = 0; i < static_cast<int>(p.code.size()); ++i) {
        const auto& ins = p.code[i];
        if (ins.is_noop()) continue;
        bool uses = false;
        if (dir == 0) {
          for (const Operand* o : {&ins.src, &ins.src2})
            uses = uses || (o->space == Space::Fm && o->mem == m);
        } else {
          uses = ins.dst.space == Space::Fm && ins.dst.mem == m;
        }
        if (uses && t.events[i].end > t.events[i].start) users.push_back(i);
      }
      std::sort(users.begin(), users.end(), [&](int a, int b) { return t.events[a].start < t.events[b].start; });
      int open = -1;
      for (int i : users) {
        if (open >= 0 && t.events[open].end > t.events[i].start)
          report("port", i, open, std::string(dir == 0 ? "read" : "write") + " port of memory " + std::to_string(m) + " busy");
        if (open < 0 || t.events[i].end > t.events[open].end) open = i;
      }
    }
  }
  return out;
}

}  // namespace dpuc::sim
