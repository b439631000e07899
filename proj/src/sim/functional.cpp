#include "dpuc/quant.hpp"
#include "dpuc/sim.hpp"

namespace dpuc::sim {

using hw::Operand;
using hw::Space;

MachineState make_state(const hw::Program& p, const hw::MachineConfig& cfg, const std::vector<uint8_t>& params) {
  MachineState st;
  st.ddr.assign(p.ddr_bytes(), 0);
  st.ddr_def.assign(p.ddr_bytes(), 0);
  st.fm.assign(cfg.fm_memories, std::vector<uint8_t>(cfg.fm_bytes(), 0));
  st.fm_def.assign(cfg.fm_memories, std::vector<uint8_t>(cfg.fm_bytes(), 0));
  st.pm.assign(cfg.pm_bytes, 0);
  st.pm_def.assign(cfg.pm_bytes, 0);
  const auto& seg = p.segment("parameters");
  if (static_cast<int64_t>(params.size()) > seg.size) throw OutOfBoundsError("parameter image larger than its segment");
  std::copy(params.begin(), params.end(), st.ddr.begin() + seg.base);
  std::fill(st.ddr_def.begin() + seg.base, st.ddr_def.begin() + seg.base + seg.size, 1);
  return st;
}

void write_inputs(MachineState& st, const hw::Program& p, const TensorMap& inputs) {
  for (auto& t : p.tensors) {
    if (t.role != "input") continue;
    auto it = inputs.find(t.name);
    if (it == inputs.end()) throw Error("no data for input '" + t.name + "'");
    const Tensor& x = it->second;
    if (x.shape != graph::Shape{t.h, t.w, t.c}) throw ShapeError("input '" + t.name + "' has the wrong shape");
    for (int h = 0; h < t.h; ++h)
      for (int w = 0; w < t.w; ++w)
        for (int c = 0; c < t.c; ++c) {
          const int64_t a = t.base + h * t.row_pitch + w * t.pix_pitch + c;
          st.ddr.at(a) = static_cast<uint8_t>(x.at(h, w, c));
          st.ddr_def[a] = 1;
        }
  }
}

TensorMap read_outputs(const MachineState& st, const hw::Program& p) {
  TensorMap m;
  for (auto& t : p.tensors) {
    if (t.role != "output") continue;
    Tensor x{{t.h, t.w, t.c}, t.exp, std::vector<int8_t>(size_t(t.h) * t.w * t.c)};
    for (int h = 0; h < t.h; ++h)
      for (int w = 0; w < t.w; ++w)
        for (int c = 0; c < t.c; ++c) x.at(h, w, c) = static_cast<int8_t>(st.ddr.at(t.base + h * t.row_pitch + w * t.pix_pitch + c));
    m[t.name] = std::move(x);
  }
  return m;
}

namespace {

struct Mem {
  std::vector<uint8_t>* data;
  std::vector<uint8_t>* def;
};

class Exec {
 public:
  Exec(MachineState& st, int index) : st_(st), index_(index) {}

  Mem mem(const Operand& o) {
    switch (o.space) {
      case Space::Ddr: return {&st_.ddr, &st_.ddr_def};
      case Space::Fm:
        if (o.mem < 0 || o.mem >= static_cast<int>(st_.fm.size())) fail<OutOfBoundsError>("feature-map memory index out of range");
        return {&st_.fm[o.mem], &st_.fm_def[o.mem]};
      case Space::Pm: return {&st_.pm, &st_.pm_def};
      default: fail<OutOfBoundsError>("operand has no address space");
    }
    return {nullptr, nullptr};
  }

  int64_t addr(const Operand& o, const Mem& m, int64_t r, int64_t c, int64_t k) {
    const int64_t a = o.at(r, c, k);
    if (a < 0 || a >= static_cast<int64_t>(m.data->size()) || (o.size > 0 && o.base + o.size > static_cast<int64_t>(m.data->size())))
      fail<OutOfBoundsError>("address " + std::to_string(a) + " outside memory");
    return a;
  }

  uint8_t read(const Operand& o, const Mem& m, int64_t r, int64_t c, int64_t k) {
    const int64_t a = addr(o, m, r, c, k);
    if (!(*m.def)[a]) fail<UseBeforeDefError>("read of unwritten byte at " + std::to_string(a));
    return (*m.data)[a];
  }

  void write(const Operand& o, const Mem& m, int64_t r, int64_t c, int64_t k, uint8_t v) {
    const int64_t a = addr(o, m, r, c, k);
    (*m.data)[a] = v;
    (*m.def)[a] = 1;
  }

  template <class E>
  [[noreturn]] void fail(const std::string& what) {
    throw E("instruction " + std::to_string(index_) + ": " + what);
  }

 private:
  MachineState& st_;
  int index_;
};

// Dense copy of the block an instruction's window reads.
std::vector<int8_t> gather(Exec& ex, const hw::Instruction& ins) {
  std::vector<int8_t> blk(size_t(ins.in_rows) * ins.in_cols * ins.in_ch);
  if (blk.empty()) return blk;
  const Mem m = ex.mem(ins.src);
  size_t i = 0;
  for (int r = 0; r < ins.in_rows; ++r)
    for (int c = 0; c < ins.in_cols; ++c)
      for (int k = 0; k < ins.in_ch; ++k) blk[i++] = static_cast<int8_t>(ex.read(ins.src, m, r, c, k));
  return blk;
}

void conv(Exec& ex, const hw::Instruction& ins) {
  const auto x = gather(ex, ins);
  const Mem wm = ex.mem(ins.wgt), bm = ex.mem(ins.bias), dm = ex.mem(ins.dst);
  const size_t wn = size_t(ins.ch) * ins.kh * ins.kw * ins.in_ch;
  std::vector<int8_t> w(wn);
  for (size_t i = 0; i < wn; ++i) w[i] = static_cast<int8_t>(ex.read(ins.wgt, wm, 0, 0, static_cast<int64_t>(i)));
  for (int o = 0; o < ins.ch; ++o) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= uint32_t(ex.read(ins.bias, bm, 0, 0, 4 * o + b)) << (8 * b);
    const int64_t bias = static_cast<int32_t>(u);
    const int8_t* wo = w.data() + size_t(o) * ins.kh * ins.kw * ins.in_ch;
    for (int r = 0; r < ins.rows; ++r)
      for (int c = 0; c < ins.cols; ++c) {
        int64_t acc = bias;
        for (int i = 0; i < ins.kh; ++i) {
          const int y = ins.org_h + r * ins.sh + i;
          if (y < 0 || y >= ins.in_rows) continue;
          for (int j = 0; j < ins.kw; ++j) {
            const int xx = ins.org_w + c * ins.sw + j;
            if (xx < 0 || xx >= ins.in_cols) continue;
            const int8_t* xp = x.data() + (size_t(y) * ins.in_cols + xx) * ins.in_ch;
            const int8_t* wp = wo + (size_t(i) * ins.kw + j) * ins.in_ch;
            int64_t s = 0;
            for (int k = 0; k < ins.in_ch; ++k) s += int32_t{xp[k]} * wp[k];
            acc += s;
          }
        }
        ex.write(ins.dst, dm, r, c, o, static_cast<uint8_t>(quant::requantize(acc, 0, ins.shift, ins.relu)));
      }
  }
}

void maxpool(Exec& ex, const hw::Instruction& ins) {
  const auto x = gather(ex, ins);
  const Mem dm = ex.mem(ins.dst);
  for (int r = 0; r < ins.rows; ++r)
    for (int c = 0; c < ins.cols; ++c)
      for (int k = 0; k < ins.ch; ++k) {
        int m = -128;
        for (int i = 0; i < ins.kh; ++i) {
          const int y = ins.org_h + r * ins.sh + i;
          if (y < 0 || y >= ins.in_rows) continue;
          for (int j = 0; j < ins.kw; ++j) {
            const int xx = ins.org_w + c * ins.sw + j;
            if (xx < 0 || xx >= ins.in_cols) continue;
            m = std::max<int>(m, x[(size_t(y) * ins.in_cols + xx) * ins.in_ch + k]);
          }
        }
        ex.write(ins.dst, dm, r, c, k, static_cast<uint8_t>(static_cast<int8_t>(m)));
      }
}

void elementwise(Exec& ex, const hw::Instruction& ins) {
  const Mem sm = ex.mem(ins.src), dm = ex.mem(ins.dst);
  const bool two = ins.sub == hw::SubOp::Eltwise;
  const Mem s2 = two ? ex.mem(ins.src2) : sm;
  const int f = ins.sub == hw::SubOp::Upsample ? ins.factor : 1;
  for (int r = 0; r < ins.rows; ++r)
    for (int c = 0; c < ins.cols; ++c)
      for (int k = 0; k < ins.ch; ++k) {
        int8_t v = 0;
        if (ins.sub == hw::SubOp::Upsample) {
          if (r % f == 0 && c % f == 0) v = static_cast<int8_t>(ex.read(ins.src, sm, r / f, c / f, k));
        } else if (two) {
          const int64_t a = quant::shift_round(static_cast<int8_t>(ex.read(ins.src, sm, r, c, k)), ins.shift_a);
          const int64_t b = quant::shift_round(static_cast<int8_t>(ex.read(ins.src2, s2, r, c, k)), ins.shift_b);
          v = quant::requantize(a + b, 0, ins.shift, ins.relu);
        } else {
          v = quant::requantize(static_cast<int8_t>(ex.read(ins.src, sm, r, c, k)), 0, ins.shift, ins.relu);
        }
        ex.write(ins.dst, dm, r, c, k, static_cast<uint8_t>(v));
      }
}

void copy(Exec& ex, const hw::Instruction& ins) {
  const Mem sm = ex.mem(ins.src), dm = ex.mem(ins.dst);
  for (int r = 0; r < ins.rows; ++r)
    for (int c = 0; c < ins.cols; ++c)
      for (int k = 0; k < ins.ch; ++k) ex.write(ins.dst, dm, r, c, k, ex.read(ins.src, sm, r, c, k));
}

}  // namespace

void run_functional(const hw::Program& p, MachineState& st) {
  for (size_t i = 0; i < p.code.size(); ++i) {
    const auto& ins = p.code[i];
    if (ins.is_noop()) continue;
    Exec ex(st, static_cast<int>(i));
    switch (ins.type) {
      case hw::OpType::Load:
      case hw::OpType::Save:
        copy(ex, ins);
        break;
      case hw::OpType::Conv:
        conv(ex, ins);
        break;
      case hw::OpType::Misc:
        if (ins.sub == hw::SubOp::MaxPool) maxpool(ex, ins);
        else elementwise(ex, ins);
        break;
    }
  }
}

TensorMap execute_program(const hw::Program& p, const hw::MachineConfig& cfg, const std::vector<uint8_t>& params,
                          const TensorMap& inputs) {
  MachineState st = make_state(p, cfg, params);
  write_inputs(st, p, inputs);
  run_functional(p, st);
  return read_outputs(st, p);
}

}  // namespace dpuc::sim
