#include "doctest.h"
#include "dpuc/compiler.hpp"
#include "dpuc/hw.hpp"
#include "support.hpp"

using namespace dpuc;
using namespace dpuc::hw;

namespace {

Instruction conv_instr() {
  Instruction c;
  c.type = OpType::Conv;
  c.sub = SubOp::Conv;
  c.rows = 8, c.cols = 12, c.ch = 8;
  c.in_rows = 12, c.in_cols = 16, c.in_ch = 8;
  c.kh = c.kw = 5;
  return c;
}

Program one(const std::string& line) { return parse_assembly(".segment instructions 0 32\n" + line + "\n"); }

}  // namespace

TEST_CASE("cost model") {
  const MachineConfig cfg;
  const Instruction c = conv_instr();
  CHECK(work_units(c) == 8 * 12 * 8 * 25 * 8);
  CHECK(instruction_cost(c, cfg) == (8 * 12 * 8 * 25 * 8 + 1023) / 1024 + 4);
  Instruction l;
  l.type = OpType::Load;
  l.rows = 1, l.cols = 16, l.ch = 8;
  CHECK(instruction_cost(l, cfg) == 128 / 16 + 4);
  Instruction m;
  m.type = OpType::Misc;
  m.sub = SubOp::MaxPool;
  m.rows = 1, m.cols = 6, m.ch = 8;
  CHECK(instruction_cost(m, cfg) == 1 + 4);
  Instruction n;
  n.sub = SubOp::Noop;
  CHECK(instruction_cost(n, cfg) == 4);
  MachineConfig fast = cfg;
  fast.conv_macs_per_cycle *= 2;
  CHECK(instruction_cost(c, fast) - 4 == (instruction_cost(c, cfg) - 4 + 1) / 2);
}

TEST_CASE("color classes") {
  Instruction i;
  CHECK(color_class(i) == "blue");
  i.sub = SubOp::Weight;
  CHECK(color_class(i) == "black");
  Instruction c = conv_instr();
  CHECK(color_class(c) == "purple");
  c.init = true;
  CHECK(color_class(c) == "red");
  Instruction m;
  m.type = OpType::Misc;
  m.sub = SubOp::MaxPool;
  CHECK(color_class(m) == "green");
  m.sub = SubOp::Eltwise;
  CHECK(color_class(m) == "yellow");
  m.sub = SubOp::Noop;
  CHECK(color_class(m) == "gray");
}

TEST_CASE("type sets print LOAD SAVE CONV MISC from the most significant bit") {
  TypeSet t;
  t.add(OpType::Load);
  CHECK(t.bits == 0b1000);
  t.add(OpType::Misc);
  CHECK(t.bits == 0b1001);
  CHECK(t.has(OpType::Misc));
  CHECK_FALSE(t.has(OpType::Conv));
  const auto p = one("CONV 0b1000 0b0001 conv rows=1 cols=1 ch=1 in_rows=1 in_cols=1 in_ch=1");
  CHECK(p.code[0].dpon.has(OpType::Load));
  CHECK(p.code[0].dpby.has(OpType::Misc));
}

TEST_CASE("operand addressing wraps inside rings") {
  Operand o{Space::Fm, 1, 1000, 100, 90, 20, 4};
  CHECK(o.at(0, 0, 0) == 1090);
  CHECK(o.at(0, 2, 1) == 1000 + (90 + 8 + 1) % 100);
  CHECK(o.at(1, 0, 0) == 1010);
  Operand d{Space::Ddr, 0, 64, 0, 0, 128, 8};
  CHECK(d.at(2, 3, 1) == 64 + 256 + 24 + 1);
}

TEST_CASE("compiled programs survive an emit/parse round trip") {
  const MachineConfig cfg;
  for (auto& [name, g] : support::corpus()) {
    INFO(name);
    const auto a = compile(g, cfg);
    const auto text = emit_assembly(a.program);
    const auto back = parse_assembly(text);
    CHECK(back == a.program);
    CHECK(emit_assembly(back) == text);
  }
}

TEST_CASE("assembly errors carry the line number") {
  auto line_of = [](const std::string& text) {
    try {
      parse_assembly(text);
    } catch (const AsmError& e) {
      return e.line;
    }
    return 0;
  };
  CHECK(line_of("LOAD 0b0000 0b0000 act rows=1\nFOO 0b0 0b0 act\n") == 2);
  CHECK(line_of("LOAD 0b0000 0b0000 conv rows=1\n") == 1);
  CHECK(line_of("LOAD 0b0000 0b0000 act rows=x\n") == 1);
  CHECK(line_of("LOAD 0b0000 0b0000 act bogus=1\n") == 1);
  CHECK(line_of("LOAD 0b00000 0b0000 act\n") == 1);
  CHECK(line_of("\n\nSAVE 0b0000 0b0000 act src=fm0:0:0\n") == 3);
}

TEST_CASE("machine configuration") {
  MachineConfig c;
  c.gamma = 512;
  c.issue_overhead = 2;
  CHECK(config_from_json(to_json(c)) == c);
  CHECK(config_from_json("{}") == MachineConfig{});
  CHECK(config_from_json("{\"h_conv\": 4}").h_conv == 4);
  CHECK_THROWS_AS(config_from_json("{\"fm_memories\": 2}"), ParseError);
  CHECK_THROWS_AS(config_from_json("{\"gamma\": 0}"), ParseError);
  CHECK_THROWS_AS(config_from_json("not json"), ParseError);
  CHECK(load_config(support::corpus_path("narrow_gamma.config.json")).gamma == 512);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);
  CHECK(c.fm_bytes() == 8 * 512 * 64);
}
