#include "builder.hpp"
#include "dpuc/quant.hpp"

namespace dpuc::lower {

LowerOptions LowerOptions::from(const hw::MachineConfig& cfg) {
  LowerOptions o;
  o.h_conv = cfg.h_conv, o.h_pool = cfg.h_pool, o.h_eltwise = cfg.h_eltwise;
  o.gamma = cfg.gamma;
  return o;
}

hw::MachineConfig tuned(const hw::MachineConfig& cfg, const LowerOptions& opt) {
  hw::MachineConfig c = cfg;
  c.h_conv = opt.h_conv, c.h_pool = opt.h_pool, c.h_eltwise = opt.h_eltwise;
  c.gamma = opt.gamma;
  return c;
}

namespace detail {

namespace {

void append_i32(std::vector<uint8_t>& out, int32_t v) {
  const auto u = static_cast<uint32_t>(v);
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<uint8_t>(u >> s));
}

int32_t aligned_bias(const graph::WeightSpec& w, int co, int acc_exp) {
  return w.bias.empty() ? 0 : quant::align_bias(w.bias[co], w.bias_exp, acc_exp);
}

SymInstr weight_load(Builder& b, const mem::DdrLayout& ddr, int node, int64_t offset, int slice, int64_t bytes) {
  SymInstr s;
  s.ins.sub = hw::SubOp::Weight;
  s.ins.src.space = hw::Space::Ddr;
  s.ins.src.base = ddr.params.at(node);
  s.ins.src.offset = offset;
  s.ins.src.pix_pitch = 1;
  s.ins.rows = 1, s.ins.cols = static_cast<int>(bytes), s.ins.ch = 1;
  bind_slice(s, kDst, slice, fm_operand(0, 0, 1, hw::Space::Pm), true);
  (void)b;
  return s;
}

struct Chunk {
  Range out, mid, in;
};

}  // namespace

void lower_conv(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt) {
  using graph::OpKind;
  const auto& W = *n.params;
  const auto& xt = g.tensor(n.inputs[0]);
  const auto& Xp = ddr.tensors.at(n.inputs[0]);
  const auto& Yp = ddr.tensors.at(n.output);
  const graph::TensorRef& tt = n.fused ? n.fused->intermediate : g.tensor(n.output);
  const graph::Shape T = tt.shape, O = g.tensor(n.output).shape;
  const bool pool = n.fused && n.fused->kind == OpKind::MaxPool;
  const bool elt = n.fused && n.fused->kind == OpKind::EltwiseAdd;
  const graph::Window cw = n.win, pw = pool ? n.fused->pool : graph::Window{};
  const hw::MachineConfig cfg = tuned(b.cfg, opt);
  const auto slabs = weight_tiling(W, cfg);
  const int acc_exp = xt.quant.exponent() + W.weight_exp;

  std::vector<int64_t> slab_off;
  const int64_t per_co = int64_t{W.kh} * W.kw * W.ci;
  for (auto& s : slabs) {
    slab_off.push_back(static_cast<int64_t>(b.code.params.size()));
    for (int64_t i = s.co.lo * per_co; i < s.co.hi * per_co; ++i) b.code.params.push_back(static_cast<uint8_t>(W.weights[i]));
    for (int o = s.co.lo; o < s.co.hi; ++o) append_i32(b.code.params, aligned_bias(W, o, acc_exp));
  }

  FusionPlan plan;
  int H = opt.h_conv;
  if (n.fused) {
    plan = plan_fusion(conv_geometry(g, n), n.fused->kind, pw, cfg);
    if (!plan.enabled) throw InfeasibleError("fusion rejected: " + plan.reason);
    H = plan.conv_h;
  }

  int max_co = 0;
  for (auto& s : slabs) max_co = std::max(max_co, s.co.size());
  std::vector<Chunk> chunks;
  for (int k = 1; k <= O.w && chunks.empty(); ++k) {
    const int step = static_cast<int>(ceil_div(O.w, k));
    if (ceil_div(O.w, step) != k) continue;
    std::vector<Chunk> cand;
    bool ok = true;
    for (int lo = 0; lo < O.w && ok; lo += step) {
      Chunk c;
      c.out = {lo, std::min(lo + step, O.w)};
      c.mid = pool ? receptive(c.out, pw.kw, pw.sw, pw.pw, T.w) : c.out;
      c.in = receptive(c.mid, cw.kw, cw.sw, cw.pw, xt.shape.w);
      ok = int64_t{c.in.size()} * W.ci <= opt.gamma && int64_t{c.mid.size()} * max_co <= opt.gamma &&
           int64_t{c.out.size()} * max_co <= opt.gamma;
      cand.push_back(c);
    }
    if (ok) chunks = std::move(cand);
  }
  if (chunks.empty()) throw InfeasibleError("conv node " + std::to_string(n.id) + ": no column split satisfies the row-vector limit");

  std::vector<Range> bands;
  for (int lo = 0; lo < T.h; lo += H) bands.push_back({lo, std::min(lo + H, T.h)});

  b.code.chunks = static_cast<int>(chunks.size());
  b.code.bands = static_cast<int>(bands.size());
  b.code.slabs = static_cast<int>(slabs.size());
  b.code.strategy = pool ? "conv+maxpool" : elt ? "conv+eltwise" : "conv";

  auto& root = b.code.tree;
  root.axis = TileNode::Axis::Root;
  root.out_rows = {0, T.h}, root.out_cols = {0, T.w}, root.out_ch = {0, T.c};
  root.in_rows = {0, xt.shape.h}, root.in_cols = {0, xt.shape.w};
  for (auto& c : chunks) {
    TileNode cn;
    cn.axis = TileNode::Axis::W;
    cn.out_rows = root.out_rows, cn.out_cols = c.mid, cn.out_ch = root.out_ch;
    cn.in_rows = root.in_rows, cn.in_cols = c.in;
    for (auto& band : bands) {
      TileNode bn = cn;
      bn.axis = TileNode::Axis::H;
      bn.out_rows = band;
      bn.in_rows = receptive(band, cw.kh, cw.sh, cw.ph, xt.shape.h);
      if (slabs.size() > 1)
        for (auto& s : slabs) {
          TileNode sn = bn;
          sn.axis = TileNode::Axis::Weights;
          sn.out_ch = s.co;
          bn.children.push_back(sn);
        }
      cn.children.push_back(bn);
    }
    root.children.push_back(cn);
  }

  const int xr = b.ring("x", pipe::kL, {pipe::kC});
  const int zr = elt ? b.ring("z", pipe::kL, {pipe::kP}) : -1;
  const int tr = b.ring("t", pipe::kC, {n.fused ? pipe::kP : pipe::kS});
  const int yr = n.fused ? b.ring("y", pipe::kP, {pipe::kS}) : -1;
  const int wr = b.ring("w", pipe::kL, {pipe::kC}, hw::Space::Pm);

  const auto& zt = elt ? g.tensor(n.inputs[1]) : xt;
  const int et = tt.quant.exponent(), ez = zt.quant.exponent(), ey = g.tensor(n.output).quant.exponent();
  const int em = std::min(et, ez);

  for (size_t si = 0; si < slabs.size(); ++si) {
    const Range co = slabs[si].co;
    int wslice = -1;
    for (size_t ci = 0; ci < chunks.size(); ++ci) {
      const Chunk& ch = chunks[ci];
      RowRing X(b, xr, int64_t{ch.in.size()} * W.ci, W.ci);
      RowRing Tq(b, tr, int64_t{ch.mid.size()} * co.size(), co.size());
      RowRing Z, P;
      if (elt) Z = RowRing(b, zr, int64_t{ch.out.size()} * co.size(), co.size());
      if (n.fused) P = RowRing(b, yr, int64_t{ch.out.size()} * co.size(), co.size());
      int next_q = 0;
      for (size_t bi = 0; bi < bands.size(); ++bi) {
        const Range band = bands[bi];
        auto& bn = root.children[ci].children[bi];
        b.leaf = slabs.size() > 1 ? &bn.children[si].instrs : &bn.instrs;
        b.begin_tile();
        const bool init = wslice < 0;
        if (init) {
          wslice = b.slice(wr, slabs[si].bytes());
          b.emit(pipe::kL, weight_load(b, ddr, n.id, slab_off[si], wslice, slabs[si].bytes()));
        }
        const Range xin = receptive(band, cw.kh, cw.sh, cw.ph, xt.shape.h);
        load_rows(b, X, Xp, xin.lo, xin.hi, ch.in, {0, W.ci});
        if (elt) load_rows(b, Z, ddr.tensors.at(n.inputs[1]), band.lo, band.hi, ch.out, co);

        SymInstr s;
        s.ins.sub = hw::SubOp::Conv;
        X.bind(s, kSrc, xin.lo, xin.hi);
        s.ins.in_rows = xin.size(), s.ins.in_cols = ch.in.size(), s.ins.in_ch = W.ci;
        s.ins.org_h = band.lo * cw.sh - cw.ph - xin.lo;
        s.ins.org_w = ch.mid.lo * cw.sw - cw.pw - ch.in.lo;
        s.ins.rows = band.size(), s.ins.cols = ch.mid.size(), s.ins.ch = co.size();
        s.ins.kh = cw.kh, s.ins.kw = cw.kw, s.ins.sh = cw.sh, s.ins.sw = cw.sw;
        s.ins.shift = et - acc_exp;
        s.ins.relu = n.relu;
        s.ins.init = init;
        bind_slice(s, kWgt, wslice, fm_operand(0, 0, 0, hw::Space::Pm), false);
        bind_slice(s, kBias, wslice, fm_operand(slabs[si].weight_bytes, 0, 0, hw::Space::Pm), false);
        Tq.add(band.lo, band.hi);
        Tq.write(s, kDst, band.lo);
        b.emit(pipe::kC, std::move(s));

        if (!n.fused) {
          for (int r = band.lo; r < band.hi; ++r) save_row(b, Tq, r, Yp, r, ch.out, co);
          continue;
        }
        if (pool) {
          const bool last = bi + 1 == bands.size();
          int q_hi = next_q;
          while (q_hi < O.h && (last || receptive({q_hi, q_hi + 1}, pw.kh, pw.sh, pw.ph, T.h).hi <= band.hi)) ++q_hi;
          if (q_hi == next_q) continue;
          P.add(next_q, q_hi);
          for (int a = next_q; a < q_hi; a += plan.consumer_out_h) {
            const int e = std::min(a + plan.consumer_out_h, q_hi);
            const Range rr = receptive({a, e}, pw.kh, pw.sh, pw.ph, T.h);
            SymInstr m;
            m.ins.sub = hw::SubOp::MaxPool;
            Tq.bind(m, kSrc, rr.lo, rr.hi);
            m.ins.in_rows = rr.size(), m.ins.in_cols = ch.mid.size(), m.ins.in_ch = co.size();
            m.ins.org_h = a * pw.sh - pw.ph - rr.lo;
            m.ins.org_w = ch.out.lo * pw.sw - pw.pw - ch.mid.lo;
            m.ins.rows = e - a, m.ins.cols = ch.out.size(), m.ins.ch = co.size();
            m.ins.kh = pw.kh, m.ins.kw = pw.kw, m.ins.sh = pw.sh, m.ins.sw = pw.sw;
            P.write(m, kDst, a);
            b.emit(pipe::kP, std::move(m));
          }
          for (int q = next_q; q < q_hi; ++q) save_row(b, P, q, Yp, q, ch.out, co);
          next_q = q_hi;
        } else {
          P.add(band.lo, band.hi);
          for (int a = band.lo; a < band.hi; a += plan.consumer_h) {
            const int e = std::min(a + plan.consumer_h, band.hi);
            SymInstr m;
            m.ins.sub = hw::SubOp::Eltwise;
            Tq.bind(m, kSrc, a, e);
            Z.bind(m, kSrc2, a, e);
            m.ins.rows = e - a, m.ins.cols = ch.out.size(), m.ins.ch = co.size();
            m.ins.shift_a = em - et, m.ins.shift_b = em - ez, m.ins.shift = ey - em;
            m.ins.relu = n.fused->relu;
            P.write(m, kDst, a);
            b.emit(pipe::kP, std::move(m));
          }
          for (int r = band.lo; r < band.hi; ++r) save_row(b, P, r, Yp, r, ch.out, co);
        }
      }
    }
  }
  b.leaf = nullptr;
}

void lower_deconv(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt) {
  const auto& W = *n.params;
  const auto& xt = g.tensor(n.inputs[0]);
  const auto& ot = g.tensor(n.output);
  const auto& Xp = ddr.tensors.at(n.inputs[0]);
  const auto& Yp = ddr.tensors.at(n.output);
  const int s = n.factor;
  const auto phases = decompose_deconv(W, s, n.win.ph, xt.shape.h, xt.shape.w);
  if (int64_t{xt.shape.w} * W.ci > opt.gamma || int64_t{ot.shape.w} * W.co > opt.gamma)
    throw UnsupportedError("deconv sub-kernel series needs a column split");
  const int64_t total = W.weight_bytes() + 4 * int64_t{W.co};
  if (total > b.cfg.pm_bytes) throw UnsupportedError("deconv sub-kernel series needs weight slabs");
  const int acc_exp = xt.quant.exponent() + W.weight_exp;

  std::vector<int64_t> woff;
  for (auto& p : phases) {
    woff.push_back(static_cast<int64_t>(b.code.params.size()));
    for (int8_t v : p.weights) b.code.params.push_back(static_cast<uint8_t>(v));
  }
  const int64_t bias_off = static_cast<int64_t>(b.code.params.size());
  for (int o = 0; o < W.co; ++o) append_i32(b.code.params, aligned_bias(W, o, acc_exp));

  const int Ho = ot.shape.h, Wo = ot.shape.w, co = W.co;
  const int nq = static_cast<int>(ceil_div(Ho, s));
  const int hq = std::max(1, opt.h_conv / s);
  b.code.chunks = 1, b.code.slabs = 1;
  b.code.strategy = "deconv-series";

  auto& root = b.code.tree;
  root.axis = TileNode::Axis::Root;
  root.out_rows = {0, Ho}, root.out_cols = {0, Wo}, root.out_ch = {0, co};
  root.in_rows = {0, xt.shape.h}, root.in_cols = {0, xt.shape.w};
  TileNode cn = root;
  cn.axis = TileNode::Axis::W;

  const int xr = b.ring("x", pipe::kL, {pipe::kC});
  const int cr = b.ring("t", pipe::kC, {pipe::kP});
  const int yr = b.ring("y", pipe::kP, {pipe::kS});
  const int wr = b.ring("w", pipe::kL, {pipe::kC}, hw::Space::Pm);
  RowRing X(b, xr, int64_t{xt.shape.w} * W.ci, W.ci);
  RowRing P(b, yr, int64_t{Wo} * co, co);
  int wslice = -1;
  for (int q0 = 0; q0 < nq; q0 += hq) {
    const int q1 = std::min(q0 + hq, nq);
    const Range out{q0 * s, std::min(q1 * s, Ho)};
    TileNode bn = cn;
    bn.axis = TileNode::Axis::H;
    bn.out_rows = out;
    b.begin_tile();
    ++b.code.bands;
    std::vector<int> leaf;
    b.leaf = &leaf;
    if (wslice < 0) {
      wslice = b.slice(wr, total);
      b.emit(pipe::kL, weight_load(b, ddr, n.id, 0, wslice, total));
    }
    Range xin{xt.shape.h, 0};
    for (auto& p : phases) {
      const int qe = std::min(q1, p.out_h);
      if (qe <= q0 || p.out_w == 0) continue;
      const int lo = std::clamp(q0 + p.off_h, 0, xt.shape.h);
      const int hi = std::clamp(qe - 1 + p.off_h + static_cast<int>(p.taps_h.size()), 0, xt.shape.h);
      if (hi > lo) xin = {std::min(xin.lo, lo), std::max(xin.hi, hi)};
    }
    if (xin.hi <= xin.lo) xin = {std::min(xin.lo, xin.hi), std::min(xin.lo, xin.hi)};
    bn.in_rows = xin;
    load_rows(b, X, Xp, xin.lo, xin.hi, {0, xt.shape.w}, {0, W.ci});

    std::vector<int64_t> block_off(phases.size(), -1), block_pitch(phases.size(), 0);
    int64_t cbytes = 0;
    for (size_t i = 0; i < phases.size(); ++i) {
      const int rows = std::min(q1, phases[i].out_h) - q0;
      if (rows <= 0 || phases[i].out_w == 0) continue;
      block_off[i] = cbytes;
      block_pitch[i] = b.pitch(int64_t{phases[i].out_w} * co);
      cbytes += rows * block_pitch[i];
    }
    const int cslice = b.slice(cr, cbytes);
    P.add(out.lo, out.hi);
    for (size_t i = 0; i < phases.size(); ++i) {
      if (block_off[i] < 0) continue;
      const auto& p = phases[i];
      const int rows = std::min(q1, p.out_h) - q0;
      SymInstr c;
      c.ins.sub = hw::SubOp::Conv;
      if (xin.size() > 0) X.bind(c, kSrc, xin.lo, xin.hi);
      c.ins.in_rows = xin.size(), c.ins.in_cols = xt.shape.w, c.ins.in_ch = W.ci;
      c.ins.org_h = q0 + p.off_h - xin.lo;
      c.ins.org_w = p.off_w;
      c.ins.kh = static_cast<int>(p.taps_h.size()), c.ins.kw = static_cast<int>(p.taps_w.size());
      c.ins.rows = rows, c.ins.cols = p.out_w, c.ins.ch = co;
      c.ins.shift = ot.quant.exponent() - acc_exp;
      c.ins.relu = n.relu;
      c.ins.init = q0 == 0 && i == 0;
      bind_slice(c, kWgt, wslice, fm_operand(woff[i], 0, 0, hw::Space::Pm), false);
      bind_slice(c, kBias, wslice, fm_operand(bias_off, 0, 0, hw::Space::Pm), false);
      const hw::Operand blk = fm_operand(block_off[i], block_pitch[i], co);
      bind_slice(c, kDst, cslice, blk, true);
      b.emit(pipe::kC, std::move(c));

      SymInstr m;
      m.ins.sub = hw::SubOp::Move;
      bind_slice(m, kSrc, cslice, blk, false);
      hw::Operand dst = P.operand(out.lo);
      dst.offset += int64_t{p.phase_h} * P.pitch + int64_t{p.phase_w} * co;
      dst.row_pitch = s * P.pitch;
      dst.pix_pitch = int64_t{s} * co;
      bind_slice(m, kDst, P.at.at(out.lo).first, dst, true);
      m.ins.rows = rows, m.ins.cols = p.out_w, m.ins.ch = co;
      b.emit(pipe::kP, std::move(m));
    }
    for (int r = out.lo; r < out.hi; ++r) save_row(b, P, r, Yp, r, {0, Wo}, {0, co});
    bn.instrs = leaf;
    cn.children.push_back(bn);
  }
  root.children.push_back(cn);
  b.leaf = nullptr;
}

}  // namespace detail

NodeCode lower_node(const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const hw::MachineConfig& cfg,
                    const LowerOptions& opt) {
  NodeCode code;
  detail::Builder b{code, cfg};
  using graph::OpKind;
  switch (n.op) {
    case OpKind::Conv:
      detail::lower_conv(b, g, n, ddr, opt);
      break;
    case OpKind::Deconv:
      detail::lower_deconv(b, g, n, ddr, opt);
      break;
    case OpKind::MaxPool:
      detail::lower_pool(b, g, n, ddr, opt);
      break;
    case OpKind::EltwiseAdd:
    case OpKind::Identity:
    case OpKind::Upsample:
      detail::lower_rowwise(b, g, n, ddr, opt);
      break;
    case OpKind::Input:
    case OpKind::Concat:
      code.strategy = "layout";
      break;
    default:
      throw UnsupportedError("node " + std::to_string(n.id) + ": " + std::string(graph::to_string(n.op)) +
                             " must be folded before lowering");
  }
  return code;
}

}  // namespace dpuc::lower
