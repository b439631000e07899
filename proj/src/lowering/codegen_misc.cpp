#include "builder.hpp"

namespace dpuc::lower::detail {

void lower_pool(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt) {
  const auto& xt = g.tensor(n.inputs[0]);
  const auto& yt = g.tensor(n.output);
  const auto& Xp = ddr.tensors.at(n.inputs[0]);
  const auto& Yp = ddr.tensors.at(n.output);
  const graph::Window w = n.win;
  const OpGeom geom{xt.shape.h, xt.shape.w, xt.shape.c, yt.shape.h, yt.shape.w, yt.shape.c, w};
  TileNode root = w_split(geom, tuned(b.cfg, opt));
  root.unit = hw::OpType::Misc;
  const int c = xt.shape.c;
  const int xr = b.ring("x", pipe::kL, {pipe::kP});
  const int yr = b.ring("y", pipe::kP, {pipe::kS});
  b.code.chunks = static_cast<int>(root.children.size());
  b.code.slabs = 1;
  b.code.strategy = "maxpool";
  for (auto& chunk : root.children) {
    RowRing X(b, xr, int64_t{chunk.in_cols.size()} * c, c);
    RowRing P(b, yr, int64_t{chunk.out_cols.size()} * c, c);
    for (int q0 = 0; q0 < yt.shape.h; q0 += opt.h_pool) {
      const int q1 = std::min(q0 + opt.h_pool, yt.shape.h);
      TileNode bn = chunk;
      bn.axis = TileNode::Axis::H;
      bn.unit = hw::OpType::Misc;
      bn.out_rows = {q0, q1};
      bn.in_rows = receptive(bn.out_rows, w.kh, w.sh, w.ph, xt.shape.h);
      b.leaf = &bn.instrs;
      b.begin_tile();
      ++b.code.bands;
      load_rows(b, X, Xp, bn.in_rows.lo, bn.in_rows.hi, chunk.in_cols, {0, c});
      SymInstr m;
      m.ins.sub = hw::SubOp::MaxPool;
      X.bind(m, kSrc, bn.in_rows.lo, bn.in_rows.hi);
      m.ins.in_rows = bn.in_rows.size(), m.ins.in_cols = chunk.in_cols.size(), m.ins.in_ch = c;
      m.ins.org_h = q0 * w.sh - w.ph - bn.in_rows.lo;
      m.ins.org_w = chunk.out_cols.lo * w.sw - w.pw - chunk.in_cols.lo;
      m.ins.rows = q1 - q0, m.ins.cols = chunk.out_cols.size(), m.ins.ch = c;
      m.ins.kh = w.kh, m.ins.kw = w.kw, m.ins.sh = w.sh, m.ins.sw = w.sw;
      P.add(q0, q1);
      P.write(m, kDst, q0);
      b.emit(pipe::kP, std::move(m));
      for (int q = q0; q < q1; ++q) save_row(b, P, q, Yp, q, chunk.out_cols, {0, c});
      b.leaf = nullptr;
      chunk.children.push_back(std::move(bn));
    }
  }
  b.code.tree = std::move(root);
}

void lower_rowwise(Builder& b, const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const LowerOptions& opt) {
  using graph::OpKind;
  const auto& at = g.tensor(n.inputs[0]);
  const auto& yt = g.tensor(n.output);
  const auto& Ap = ddr.tensors.at(n.inputs[0]);
  const auto& Yp = ddr.tensors.at(n.output);
  const bool elt = n.op == OpKind::EltwiseAdd;
  const int f = n.op == OpKind::Upsample ? n.factor : 1;
  const int c = at.shape.c;
  const int64_t row_limit = int64_t{f} * c;
  if (row_limit > opt.gamma) throw InfeasibleError("node " + std::to_string(n.id) + ": one column exceeds the row-vector limit");
  const int cw = static_cast<int>(std::min<int64_t>(at.shape.w, opt.gamma / row_limit));
  const int nchunks = static_cast<int>(ceil_div(at.shape.w, cw));
  const int step = static_cast<int>(ceil_div(at.shape.w, nchunks));

  const int ar = b.ring("a", pipe::kL, {pipe::kP});
  const int br = elt ? b.ring("b", pipe::kL, {pipe::kP}) : -1;
  const int yr = b.ring("y", pipe::kP, {pipe::kS});
  b.code.chunks = nchunks;
  b.code.slabs = 1;
  b.code.strategy = std::string(graph::to_string(n.op));

  const int ea = at.quant.exponent(), ey = yt.quant.exponent();
  const int eb = elt ? g.tensor(n.inputs[1]).quant.exponent() : ea;
  const int em = std::min(ea, eb);

  auto& root = b.code.tree;
  root.axis = TileNode::Axis::Root;
  root.unit = hw::OpType::Misc;
  root.out_rows = {0, yt.shape.h}, root.out_cols = {0, yt.shape.w}, root.out_ch = {0, c};
  root.in_rows = {0, at.shape.h}, root.in_cols = {0, at.shape.w};
  for (int a0 = 0; a0 < at.shape.w; a0 += step) {
    const Range in_cols{a0, std::min(a0 + step, at.shape.w)};
    const Range out_cols{in_cols.lo * f, in_cols.hi * f};
    TileNode cn = root;
    cn.axis = TileNode::Axis::W;
    cn.out_cols = out_cols, cn.in_cols = in_cols;
    RowRing A(b, ar, int64_t{in_cols.size()} * c, c);
    RowRing B;
    if (elt) B = RowRing(b, br, int64_t{in_cols.size()} * c, c);
    RowRing P(b, yr, int64_t{out_cols.size()} * c, c);
    for (int r0 = 0; r0 < at.shape.h; r0 += opt.h_eltwise) {
      const int r1 = std::min(r0 + opt.h_eltwise, at.shape.h);
      TileNode bn = cn;
      bn.axis = TileNode::Axis::H;
      bn.in_rows = {r0, r1};
      bn.out_rows = {r0 * f, r1 * f};
      b.leaf = &bn.instrs;
      b.begin_tile();
      ++b.code.bands;
      load_rows(b, A, Ap, r0, r1, in_cols, {0, c});
      if (elt) load_rows(b, B, ddr.tensors.at(n.inputs[1]), r0, r1, in_cols, {0, c});
      SymInstr m;
      A.bind(m, kSrc, r0, r1);
      m.ins.in_rows = r1 - r0, m.ins.in_cols = in_cols.size(), m.ins.in_ch = c;
      m.ins.rows = (r1 - r0) * f, m.ins.cols = out_cols.size(), m.ins.ch = c;
      if (elt) {
        m.ins.sub = hw::SubOp::Eltwise;
        B.bind(m, kSrc2, r0, r1);
        m.ins.shift_a = em - ea, m.ins.shift_b = em - eb, m.ins.shift = ey - em;
        m.ins.relu = n.relu;
      } else if (f > 1 || n.op == OpKind::Upsample) {
        m.ins.sub = hw::SubOp::Upsample;
        m.ins.factor = f;
      } else {
        m.ins.sub = hw::SubOp::Move;
        m.ins.shift = ey - ea;
        m.ins.relu = n.relu;
      }
      P.add(r0 * f, r1 * f);
      P.write(m, kDst, r0 * f);
      b.emit(pipe::kP, std::move(m));
      for (int r = r0 * f; r < r1 * f; ++r) save_row(b, P, r, Yp, r, out_cols, {0, c});
      b.leaf = nullptr;
      cn.children.push_back(std::move(bn));
    }
    root.children.push_back(std::move(cn));
  }
}

}  // namespace dpuc::lower::detail
