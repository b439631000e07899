#include "dpuc/compiler.hpp"

#include <algorithm>
#include <filesystem>

#include "dpuc/pipeline.hpp"
#include "dpuc/sim.hpp"

namespace dpuc {

using graph::Node;
using graph::OpKind;

namespace {

struct Placed {
  const graph::Node* node = nullptr;
  lower::NodeCode code;
  pipe::Stream stream;
  std::vector<mem::CircularAlloc> alloc;
  std::vector<RingPlacement> rings;
};

// Pipelines the node's tiles, sizes its rings and allocates every slice.
Placed place(const graph::Node& n, lower::NodeCode code, const hw::MachineConfig& cfg, const CompileOptions& opt) {
  Placed p;
  p.node = &n;
  std::vector<int> fm_rings;
  std::vector<mem::RingUse> uses;
  for (int r = 0; r < static_cast<int>(code.rings.size()); ++r)
    if (code.rings[r].space == hw::Space::Fm) {
      fm_rings.push_back(r);
      uses.push_back({code.rings[r].writer, code.rings[r].readers});
    }
  const auto fm = mem::assign_fm_memories(uses, cfg.fm_memories);

  pipe::Options po;
  po.pipelined = opt.pipelined;
  po.serial = fm.serial;
  p.stream = pipe::build_stream(code.tiles, po);

  std::vector<int> group(code.instrs.size(), 0);
  for (auto& in : p.stream.inst)
    for (int h : in.items) group[h] = in.group;
  std::vector<mem::Access> acc;
  for (size_t i = 0; i < code.instrs.size(); ++i) acc.push_back({group[i], code.instrs[i].reads, code.instrs[i].writes});
  const auto live = mem::compute_liveness(static_cast<int>(code.slices.size()), acc);

  // demand of a ring: most bytes simultaneously live
  std::vector<int64_t> demand(code.rings.size(), 0);
  {
    std::vector<std::map<int, int64_t>> delta(code.rings.size());
    for (size_t s = 0; s < code.slices.size(); ++s) {
      if (live[s].first < 0) continue;
      delta[code.slices[s].ring][live[s].first] += code.slices[s].bytes;
      delta[code.slices[s].ring][live[s].last + 1] -= code.slices[s].bytes;
    }
    for (size_t r = 0; r < code.rings.size(); ++r) {
      int64_t cur = 0;
      for (auto& [g, d] : delta[r]) demand[r] = std::max(demand[r], cur += d);
    }
  }

  p.rings.resize(code.rings.size());
  for (size_t r = 0; r < code.rings.size(); ++r) {
    p.rings[r].name = code.rings[r].name;
    p.rings[r].space = code.rings[r].space;
  }
  for (int m = 0; m < cfg.fm_memories; ++m) {
    std::vector<int> here;
    int64_t total = 0;
    for (size_t k = 0; k < fm_rings.size(); ++k)
      if (fm.mem[k] == m) here.push_back(fm_rings[k]), total += std::max<int64_t>(demand[fm_rings[k]], 1);
    int64_t base = 0;
    for (size_t k = 0; k < here.size(); ++k) {
      const int r = here[k];
      int64_t cap = k + 1 == here.size() ? cfg.fm_bytes() - base
                                         : cfg.fm_bytes() * std::max<int64_t>(demand[r], 1) / total / cfg.fm_row_bytes * cfg.fm_row_bytes;
      p.rings[r].mem = m;
      p.rings[r].base = base;
      p.rings[r].capacity = cap;
      base += cap;
    }
  }
  for (size_t r = 0; r < code.rings.size(); ++r)
    if (code.rings[r].space == hw::Space::Pm) p.rings[r].capacity = cfg.pm_bytes;

  p.alloc.resize(code.slices.size());
  std::vector<int64_t> sizes;
  for (auto& s : code.slices) sizes.push_back(s.bytes);
  for (size_t r = 0; r < code.rings.size(); ++r) {
    std::vector<int> mine;
    for (size_t s = 0; s < code.slices.size(); ++s)
      if (code.slices[s].ring == static_cast<int>(r) && live[s].first >= 0) mine.push_back(static_cast<int>(s));
    p.rings[r].slices = static_cast<int>(mine.size());
    if (mine.empty()) continue;
    if (p.rings[r].capacity <= 0) throw OutOfMemoryError("ring '" + p.rings[r].name + "' has no space");
    auto a = mem::allocate_circular(mine, sizes, live, p.rings[r].mem, p.rings[r].capacity);
    for (int s : mine) p.alloc[s] = a[s];
  }
  p.code = std::move(code);
  return p;
}

lower::LowerOptions shrink_h(lower::LowerOptions o, int step) {
  o.h_conv = std::max(1, o.h_conv >> step);
  o.h_pool = std::max(1, o.h_pool >> step);
  o.h_eltwise = std::max(1, o.h_eltwise >> step);
  return o;
}

struct Lowered {
  std::vector<Placed> parts;
  std::vector<std::unique_ptr<graph::Node>> owned;
  std::unique_ptr<graph::Graph> local;
};

void lower_with_ladder(const graph::Graph& g, const graph::Node& n, const mem::DdrLayout& ddr, const hw::MachineConfig& cfg,
                       const CompileOptions& opt, Lowered& out, std::vector<std::string>& attempts, bool allow_unfuse) {
  const auto base = lower::LowerOptions::from(cfg);
  std::vector<std::pair<std::string, lower::LowerOptions>> tries;
  for (int s = 0; (base.h_conv >> s) >= 1 || s == 0; ++s) {
    tries.push_back({"h_conv=" + std::to_string(std::max(1, base.h_conv >> s)), shrink_h(base, s)});
    if ((base.h_conv >> s) <= 1) break;
  }
  std::string last;
  for (auto& [label, o] : tries) {
    try {
      out.parts.push_back(place(n, lower::lower_node(g, n, ddr, cfg, o), cfg, opt));
      return;
    } catch (const Error& e) {
      attempts.push_back("node " + std::to_string(n.id) + " " + label + ": " + e.what());
    }
  }
  if (n.fused && allow_unfuse) {
    // conv writes the intermediate to DDR, the consumer runs on its own
    out.local = std::make_unique<graph::Graph>(g);
    auto& lg = *out.local;
    lg.tensors[n.fused->intermediate.name] = n.fused->intermediate;
    auto conv = std::make_unique<graph::Node>(n);
    conv->fused.reset();
    conv->output = n.fused->intermediate.name;
    conv->inputs.resize(1);
    auto cons = std::make_unique<graph::Node>();
    cons->id = -n.id;
    cons->op = n.fused->kind;
    cons->win = n.fused->pool;
    cons->relu = n.fused->relu;
    cons->inputs = {n.fused->intermediate.name};
    if (n.fused->kind == OpKind::EltwiseAdd) cons->inputs.push_back(n.inputs[1]);
    cons->output = n.output;
    attempts.push_back("node " + std::to_string(n.id) + ": unfused");
    Lowered tmp;
    lower_with_ladder(lg, *conv, ddr, cfg, opt, tmp, attempts, false);
    lower_with_ladder(lg, *cons, ddr, cfg, opt, tmp, attempts, false);
    for (auto& p : tmp.parts) out.parts.push_back(std::move(p));
    out.owned.push_back(std::move(conv));
    out.owned.push_back(std::move(cons));
    for (auto& o : tmp.owned) out.owned.push_back(std::move(o));
    return;
  }
  for (int64_t gamma = base.gamma / 2; gamma >= 1; gamma /= 2) {
    lower::LowerOptions o = shrink_h(base, 30);
    o.gamma = gamma;
    try {
      out.parts.push_back(place(n, lower::lower_node(g, n, ddr, cfg, o), cfg, opt));
      return;
    } catch (const Error& e) {
      attempts.push_back("node " + std::to_string(n.id) + " gamma=" + std::to_string(gamma) + ": " + e.what());
      last = e.what();
    }
  }
  throw CompileError("node " + std::to_string(n.id) + " cannot be lowered: " + last);
}

hw::Instruction concretize(const lower::SymInstr& s, const Placed& p) {
  hw::Instruction ins = s.ins;
  for (int slot = 0; slot < lower::kNumSlots; ++slot) {
    const int sl = s.slice[slot];
    if (sl < 0) continue;
    const auto& ring = p.rings[p.code.slices[sl].ring];
    hw::Operand* op = nullptr;
    switch (slot) {
      case lower::kSrc: op = &ins.src; break;
      case lower::kSrc2: op = &ins.src2; break;
      case lower::kDst: op = &ins.dst; break;
      case lower::kWgt: op = &ins.wgt; break;
      default: op = &ins.bias; break;
    }
    op->space = ring.space;
    op->mem = ring.space == hw::Space::Fm ? ring.mem : 0;
    op->base = ring.base;
    op->size = ring.capacity;
    op->offset = ((op->offset + p.alloc[sl].start) % ring.capacity + ring.capacity) % ring.capacity;
  }
  return ins;
}

void remap_tree(lower::TileNode& t, const std::vector<int>& global) {
  for (int& i : t.instrs) i = global[i];
  for (auto& c : t.children) remap_tree(c, global);
}

CompileArtifacts build(const graph::Graph& g, const graph::Schedule& sched, const hw::MachineConfig& cfg,
                       const CompileOptions& opt) {
  CompileArtifacts a;
  a.graph = g;
  a.schedule = sched;
  a.layout = mem::ddr_layout(g, 0);
  a.params.assign(a.layout.segment("parameters").size, 0);
  const int64_t pbase = a.layout.segment("parameters").base;
  auto& code = a.program.code;
  for (int id : sched) {
    const Node& n = g.node(id);
    NodeReport rep;
    rep.id = id;
    rep.op = std::string(graph::to_string(n.op));
    rep.first_instr = static_cast<int>(code.size());
    Lowered low;
    lower_with_ladder(g, n, a.layout, cfg, opt, low, rep.attempts, true);
    for (auto& part : low.parts) {
      const auto& nc = part.code;
      if (!nc.params.empty()) {
        const int64_t off = a.layout.params.at(id) - pbase;
        std::copy(nc.params.begin(), nc.params.end(), a.params.begin() + off);
      }
      const auto items = pipe::flatten(part.stream);
      std::vector<int> global(nc.instrs.size(), -1);
      const int first = static_cast<int>(code.size());
      for (auto& it : items) {
        hw::Instruction ins;
        if (it.handle >= 0) {
          ins = concretize(nc.instrs[it.handle], part);
          global[it.handle] = static_cast<int>(code.size());
        } else {
          ins.sub = hw::SubOp::Noop;
        }
        ins.type = it.type;
        ins.dpon = it.dpon;
        ins.dpby = it.dpby;
        code.push_back(ins);
        a.instr_node.push_back(id);
        a.instr_group.push_back(it.group);
        a.instr_tile.push_back(it.handle >= 0 ? it.tile : -1);
      }
      // the new part starts only after everything before it has finished
      if (first > 0 && static_cast<int>(code.size()) > first) {
        auto& prev = code[first - 1];
        auto& next = code[first];
        if (prev.type != next.type) {
          prev.dpby.add(next.type);
          next.dpon.add(prev.type);
        }
      }
      rep.tiles += static_cast<int>(nc.tiles.size());
      rep.chunks += nc.chunks, rep.bands += nc.bands, rep.slabs += nc.slabs;
      rep.strategy += (rep.strategy.empty() ? "" : "+") + nc.strategy;
      for (auto& r : part.rings) rep.rings.push_back(r);
      lower::TileNode tree = nc.tree;
      remap_tree(tree, global);
      if (low.parts.size() == 1) rep.tree = std::move(tree);
      else rep.tree.children.push_back(std::move(tree));
    }
    rep.num_instrs = static_cast<int>(code.size()) - rep.first_instr;
    a.nodes.push_back(std::move(rep));
  }
  a.layout.segments.back().size = static_cast<int64_t>(code.size()) * mem::kInstrBytes;
  a.program.segments = a.layout.segments;
  for (auto& name : g.inputs) {
    const auto& p = a.layout.tensors.at(name);
    a.program.tensors.push_back({name, "input", p.base, p.h, p.w, p.c, p.row_pitch, p.pix_pitch, p.exp});
  }
  for (auto& name : g.outputs) {
    const auto& p = a.layout.tensors.at(name);
    a.program.tensors.push_back({name, "output", p.base, p.h, p.w, p.c, p.row_pitch, p.pix_pitch, p.exp});
  }
  a.makespan = sim::run_timing(a.program, cfg).makespan;
  return a;
}

}  // namespace

CompileArtifacts compile(const graph::Graph& input, const hw::MachineConfig& cfg, const CompileOptions& opt) {
  cfg.validate();
  const graph::Graph g = prepare_graph(input, cfg, opt);
  std::vector<std::string> failures;
  for (auto& est : graph::explore_schedules(g, opt.schedule_budget)) {
    try {
      CompileArtifacts a = build(g, est.schedule, cfg, opt);
      a.schedule_failures = failures;
      return a;
    } catch (const Error& e) {
      failures.push_back(e.what());
    }
  }
  std::string msg = "no schedule could be compiled:";
  for (auto& f : failures) msg += "\n  " + f;
  throw CompileError(msg);
}

void write_artifacts(const CompileArtifacts& a, const std::string& dir, bool with_tiles) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/program.asm", hw::emit_assembly(a.program));
  write_file(dir + "/params.bin", std::span<const uint8_t>(a.params));
  write_file(dir + "/memmap.json", a.memmap_json());
  write_file(dir + "/report.json", a.report_json());
  if (with_tiles) write_file(dir + "/tiles.json", a.tiles_json());
}

}  // namespace dpuc
