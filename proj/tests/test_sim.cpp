#include "doctest.h"
#include "dpuc/builder.hpp"
#include "dpuc/hw.hpp"
#include "dpuc/sim.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace dpuc;
using namespace dpuc::sim;

namespace {

const char* kSegments = ".segment inputs 0 64\n.segment parameters 64 64\n.segment instructions 128 128\n";

std::string load(const char* dpby, int offset) {
  return std::string("LOAD 0b0000 ") + dpby + " act src=ddr0:0:0:" + std::to_string(offset) +
         ":16:1 dst=fm0:0:0:" + std::to_string(offset) + ":16:1 rows=1 cols=16 ch=1\n";
}

std::string move(const char* dpon, int offset) {
  return std::string("MISC ") + dpon + " 0b0000 move src=fm0:0:0:" + std::to_string(offset) +
         ":16:1 dst=fm1:0:0:0:16:1 rows=1 cols=16 ch=1\n";
}

void check_reference(const graph::Graph& g) {
  const auto f = graph::fold_constants_and_quantizers(g);
  for (uint64_t s = 0; s < 4; ++s) {
    const auto in = random_inputs(g, s);
    const auto ref = reference_execute(g, in);
    const auto want = oracle::run(f, in);
    for (auto& [name, t] : want) {
      INFO(name);
      REQUIRE(ref.count(name));
      CHECK(ref.at(name) == t);
    }
  }
}

}  // namespace

TEST_CASE("random inputs are reproducible per seed") {
  const auto g = support::load("toy_conv");
  CHECK(random_inputs(g, 1) == random_inputs(g, 1));
  CHECK_FALSE(random_inputs(g, 1) == random_inputs(g, 2));
  const auto& x = random_inputs(g, 0).at("x");
  CHECK(x.shape == graph::Shape{8, 8, 4});
  CHECK(x.exp == -4);
}

TEST_CASE("reference executor agrees with the oracle") {
  SUBCASE("strided padded conv") {
    graph::Builder b(1);
    auto x = b.input("x", {9, 7, 3}, -3);
    check_reference(b.finish({b.conv(x, "y", 5, 3, 2, 1, false, false)}));
  }
  SUBCASE("unfolded conv chain with pooling") {
    graph::Builder b(2);
    auto x = b.input("x", {10, 10, 2}, -4);
    auto c = b.conv(x, "c", 4, 3, 1, 1, true, true);
    check_reference(b.finish({b.maxpool(c, "y", 3, 2, 1)}));
  }
  SUBCASE("upsample, add and concat") {
    graph::Builder b(3);
    auto x = b.input("x", {4, 5, 3}, -4);
    auto u = b.upsample(x, "u", 2);
    auto z = b.input("z", {8, 10, 3}, -2);
    auto s = b.add(u, z, "s", true);
    check_reference(b.finish({b.concat({s, z}, "y", -3)}));
  }
  SUBCASE("deconvolution") {
    graph::Builder b(4);
    auto x = b.input("x", {5, 4, 3}, -4);
    check_reference(b.finish({b.conv(x, "y", 2, 4, 2, 1, true, false, graph::OpKind::Deconv)}));
  }
  SUBCASE("corpus") {
    for (auto& [name, g] : support::corpus()) {
      INFO(name);
      check_reference(g);
    }
  }
}

TEST_CASE("timing pairs the n-th wait with the n-th signal") {
  const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0001", 0) + load("0b0001", 16) + move("0b1000", 0) +
                                    move("0b1000", 16));
  const hw::MachineConfig cfg;
  const auto t = run_timing(p, cfg);
  const int64_t l = 16 / 16 + 4, m = 1 + 4;
  CHECK(t.events[0].end == l);
  CHECK(t.events[1].end == 2 * l);
  CHECK(t.events[2].start == l);
  CHECK(t.events[3].start == std::max(2 * l, l + m));
  CHECK(t.makespan == t.events[3].end);
  CHECK(t.busy[static_cast<int>(hw::OpType::Load)] == 2 * l);
  CHECK(t.utilization(hw::OpType::Misc) == doctest::Approx(2.0 * m / t.makespan));
}

TEST_CASE("waits without a matching signal deadlock") {
  const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0000", 0) + move("0b1000", 0));
  CHECK_THROWS_AS(run_timing(p, {}), DeadlockError);
}

TEST_CASE("faster convolution shortens conv events") {
  const auto a = [] {
    hw::Program p;
    hw::Instruction c;
    c.type = hw::OpType::Conv;
    c.sub = hw::SubOp::Conv;
    c.rows = 8, c.cols = 16, c.ch = 16, c.kh = c.kw = 3, c.in_ch = 16;
    p.code = {c, c};
    return p;
  }();
  hw::MachineConfig cfg, fast;
  fast.conv_macs_per_cycle *= 2;
  const auto t1 = run_timing(a, cfg), t2 = run_timing(a, fast);
  const int64_t d1 = t1.events[0].end - t1.events[0].start - cfg.issue_overhead;
  const int64_t d2 = t2.events[0].end - t2.events[0].start - cfg.issue_overhead;
  CHECK(d2 == (d1 + 1) / 2);
}

TEST_CASE("trace JSON round trip and timeline") {
  const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0001", 0) + move("0b1000", 0));
  const auto t = run_timing(p, {});
  const auto back = trace_from_json(to_json(t));
  CHECK(to_json(back) == to_json(t));
  CHECK(back.makespan == t.makespan);
  const auto svg = timeline_svg(t);
  for (const char* lane : {"LOAD", "CONV", "MISC", "SAVE"}) CHECK(svg.find(lane) != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
  const auto empty = timeline_svg(Trace{});
  CHECK(empty.find("<rect") == std::string::npos);
  CHECK(empty.find("</svg>") != std::string::npos);
  CHECK_THROWS_AS(trace_from_json("[1,2"), ParseError);
}

TEST_CASE("functional model rejects undefined reads and bad addresses") {
  const hw::MachineConfig cfg;
  SUBCASE("read before write") {
    const auto p = hw::parse_assembly(std::string(kSegments) + move("0b0000", 0));
    auto st = make_state(p, cfg, {});
    CHECK_THROWS_AS(run_functional(p, st), UseBeforeDefError);
  }
  SUBCASE("outside DDR") {
    const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0000", 1 << 20));
    auto st = make_state(p, cfg, {});
    CHECK_THROWS_AS(run_functional(p, st), OutOfBoundsError);
  }
  SUBCASE("well-formed copy") {
    const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0000", 0) + move("0b0000", 0));
    auto st = make_state(p, cfg, {});
    for (int i = 0; i < 16; ++i) st.ddr[i] = static_cast<uint8_t>(i * 3), st.ddr_def[i] = 1;
    run_functional(p, st);
    for (int i = 0; i < 16; ++i) CHECK(st.fm[1][i] == i * 3);
  }
}

TEST_CASE("hazard checker flags races and port clashes") {
  const hw::MachineConfig cfg;
  SUBCASE("ordered program is clean") {
    const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0001", 0) + move("0b1000", 0));
    CHECK(check_hazards(p, run_timing(p, cfg), cfg).empty());
  }
  SUBCASE("missing wait is a read-after-write race") {
    const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0000", 0) + move("0b0000", 0));
    const auto h = check_hazards(p, run_timing(p, cfg), cfg);
    REQUIRE(!h.empty());
    CHECK(h[0].kind == "raw");
    CHECK(h[0].instr == 1);
    CHECK(h[0].other == 0);
  }
  SUBCASE("two writers on one memory at once") {
    const auto p = hw::parse_assembly(std::string(kSegments) + load("0b0000", 0) +
                                      "MISC 0b0000 0b0000 move src=fm2:0:0:0:16:1 dst=fm0:0:0:64:16:1 rows=1 cols=16 ch=1\n");
    const auto t = run_timing(p, cfg);
    const auto h = check_hazards(p, t, cfg);
    bool port = false;
    for (auto& x : h) port = port || x.kind == "port";
    CHECK(port);
  }
}
