#include <random>
#include <set>

#include "doctest.h"
#include "dpuc/compiler.hpp"
#include "dpuc/memory.hpp"
#include "dpuc/pipeline.hpp"
#include "support.hpp"

using namespace dpuc;
using namespace dpuc::mem;

namespace {

std::set<int64_t> bytes_of(const CircularAlloc& a, int64_t cap) {
  std::set<int64_t> b;
  for (int64_t i = 0; i < a.length; ++i) b.insert((a.start + i) % cap);
  return b;
}

}  // namespace

TEST_CASE("liveness spans first write to last read") {
  const std::vector<Access> ops = {{0, {}, {0}}, {1, {0}, {1}}, {2, {}, {2}}, {3, {0, 1}, {}}};
  const auto l = compute_liveness(3, ops);
  CHECK(l[0].first == 0);
  CHECK(l[0].last == 3);
  CHECK(l[1].first == 1);
  CHECK(l[1].last == 3);
  CHECK(l[2].first == 2);
  CHECK(l[2].dead);
  CHECK_THROWS_AS(compute_liveness(2, {{0, {1}, {0}}}), UseBeforeDefError);
}

TEST_CASE("ring allocation wraps and never overlaps live buffers") {
  std::vector<LiveRange> live = {{0, 1, false}, {1, 2, false}, {2, 3, false}};
  const auto a = allocate_circular({0, 1, 2}, {40, 40, 40}, live, 1, 100);
  CHECK(a[0].start == 0);
  CHECK(a[1].start == 40);
  CHECK(a[2].start == 80);
  CHECK(a[2].wrap);
  CHECK(a[2].mem == 1);
  live[0].last = 2;
  CHECK_THROWS_AS(allocate_circular({0, 1, 2}, {40, 40, 40}, live, 0, 100), OutOfMemoryError);
  CHECK_THROWS_AS(allocate_circular({0}, {101}, live, 0, 100), OutOfMemoryError);
}

TEST_CASE("ring allocation property: concurrently live buffers are disjoint") {
  std::mt19937 rng(3);
  int placed = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + rng() % 10;
    const int64_t cap = 64 + rng() % 200;
    std::vector<int64_t> sizes;
    std::vector<LiveRange> live;
    std::vector<int> order;
    int step = 0;
    for (int i = 0; i < n; ++i) {
      sizes.push_back(1 + rng() % 60);
      step += rng() % 2;
      live.push_back({step, step + static_cast<int>(rng() % 4), false});
      order.push_back(i);
    }
    std::vector<CircularAlloc> a;
    try {
      a = allocate_circular(order, sizes, live, 0, cap);
    } catch (const OutOfMemoryError&) {
      continue;
    }
    ++placed;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (live[i].last < live[j].first || live[j].last < live[i].first) continue;
        const auto bi = bytes_of(a[i], cap), bj = bytes_of(a[j], cap);
        for (int64_t b : bi) CHECK(bj.count(b) == 0);
      }
  }
  CHECK(placed > 100);
}

TEST_CASE("feature-map memory roles") {
  using pipe::kC, pipe::kL, pipe::kP, pipe::kS;
  SUBCASE("conv with a fused pool needs no serialization") {
    const auto a = assign_fm_memories({{kL, {kC}}, {kC, {kP}}, {kP, {kS}}}, 3);
    CHECK(a.serial.empty());
    CHECK(std::set<int>(a.mem.begin(), a.mem.end()).size() == 3);
  }
  SUBCASE("a residual operand forces conv and misc to alternate") {
    const auto a = assign_fm_memories({{kL, {kC}}, {kC, {kP}}, {kL, {kP}}, {kP, {kS}}}, 3);
    REQUIRE(a.serial.size() == 1);
    CHECK(a.serial[0] == std::pair<int, int>{kC, kP});
  }
  SUBCASE("load and save cannot share a port") {
    CHECK_THROWS_AS(assign_fm_memories({{kL, {kC}}, {kC, {kS}}, {kS, {kL}}}, 1), PortConflictError);
  }
}

TEST_CASE("DDR layout") {
  for (auto& [name, g0] : support::corpus()) {
    INFO(name);
    const auto g = prepare_graph(g0, {}, {});
    const auto l = ddr_layout(g, 10);
    const std::vector<std::string> order = {"inputs", "outputs", "parameters", "swap", "instructions"};
    REQUIRE(l.segments.size() == order.size());
    int64_t end = 0;
    for (size_t i = 0; i < order.size(); ++i) {
      CHECK(l.segments[i].name == order[i]);
      CHECK(l.segments[i].base % kDdrAlign == 0);
      CHECK(l.segments[i].base >= end);
      end = l.segments[i].base + l.segments[i].size;
    }
    CHECK(l.segment("instructions").size == 10 * kInstrBytes);
    CHECK(l.total() == end);
    std::vector<std::pair<int64_t, int64_t>> spans;
    for (auto& [t, p] : l.tensors) {
      const auto& seg = l.segment(p.segment);
      const int64_t last = p.base + int64_t{p.h - 1} * p.row_pitch + int64_t{p.w - 1} * p.pix_pitch + p.c;
      CHECK(p.base >= seg.base);
      CHECK(last <= seg.base + seg.size);
      if (p.view_of.empty()) spans.push_back({p.base, p.base + int64_t{p.h} * p.row_pitch});
    }
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i) CHECK(spans[i].first >= spans[i - 1].second);
    for (auto& n : g.nodes)
      if (n.params) CHECK(param_block_bytes(n) == n.params->weight_bytes() + 4 * int64_t{n.params->co});
  }
}

TEST_CASE("concat inputs are channel views of the concat output") {
  const auto g = prepare_graph(support::load("inception_cell"), {}, {});
  const auto l = ddr_layout(g, 0);
  const auto& y = l.tensors.at("y");
  int64_t off = 0;
  for (auto& n : g.nodes) {
    if (n.op != graph::OpKind::Concat) continue;
    for (auto& in : n.inputs) {
      const auto& p = l.tensors.at(in);
      CHECK(p.view_of == "y");
      CHECK(p.base == y.base + off);
      CHECK(p.row_pitch == y.row_pitch);
      CHECK(p.pix_pitch == y.pix_pitch);
      off += p.c;
    }
  }
  CHECK(off == y.c);
}
