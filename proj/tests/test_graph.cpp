#include <cmath>

#include "doctest.h"
#include "dpuc/builder.hpp"
#include "dpuc/hw.hpp"
#include "dpuc/quant.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace dpuc;
using namespace dpuc::graph;

namespace {

// Rounds value * 2^-shift with an exact real-number model.
int64_t shift_oracle(int64_t v, int shift) { return static_cast<int64_t>(std::round(std::ldexp(static_cast<double>(v), -shift))); }

Graph tiny_conv() {
  Builder b(9);
  auto x = b.input("x", {6, 6, 3}, -4);
  return b.finish({b.conv(x, "y", 4, 3, 1, 1, true, false)});
}

}  // namespace

TEST_CASE("shift_round rounds half away from zero") {
  for (int64_t v : {-1000, -17, -8, -6, -5, -4, -3, -1, 0, 1, 3, 4, 5, 6, 8, 17, 1000, 123456789})
    for (int s = -3; s <= 10; ++s) CHECK(quant::shift_round(v, s) == shift_oracle(v, s));
  CHECK(quant::shift_round(5, 1) == 3);
  CHECK(quant::shift_round(-5, 1) == -3);
}

TEST_CASE("requantize saturates and applies relu first") {
  CHECK(quant::requantize(100000, 0, 2) == 127);
  CHECK(quant::requantize(-100000, 0, 2) == -128);
  CHECK(quant::requantize(-100000, 0, 2, true) == 0);
  CHECK(quant::requantize(6, -2, -1) == 3);
  CHECK(quant::align_bias(3, 0, -4) == 48);
  CHECK(quant::add(10, -3, 7, -2, -2) == quant::saturate8(shift_oracle(10 + 14, 1)));
}

TEST_CASE("quantization exponents must be powers of two") {
  CHECK(QuantInfo{-128 * 0.25, 127 * 0.25, 0.25}.exponent() == -2);
  CHECK_THROWS_AS(QuantInfo({-1, 1, 0.3}).exponent(), ParseError);
}

TEST_CASE("corpus graphs survive a print/parse round trip") {
  for (auto& [name, g] : support::corpus()) {
    INFO(name);
    CHECK(parse_graph(to_json(g)) == g);
  }
}

TEST_CASE("validation rejects malformed graphs") {
  Graph g = tiny_conv();
  SUBCASE("unknown input tensor") {
    g.nodes.back().inputs[0] = "nope";
    CHECK_THROWS_AS(validate(g), ParseError);
  }
  SUBCASE("tensor written twice") {
    g.nodes[0].output = "y";
    CHECK_THROWS(validate(g));
  }
  SUBCASE("wrong output shape") {
    g.tensors["y"].shape.h = 5;
    CHECK_THROWS_AS(validate(g), ShapeError);
  }
  SUBCASE("cycle") {
    Builder b(1);
    auto x = b.input("x", {4, 4, 2}, -4);
    auto a = b.add(x, x, "a", false);
    auto y = b.add(a, x, "y", false);
    Graph c = b.finish({y});
    c.nodes[1].inputs[1] = "y";
    CHECK_THROWS_AS(validate(c), ParseError);
  }
  SUBCASE("malformed json") { CHECK_THROWS_AS(parse_graph("{\"tensors\": 3}"), ParseError); }
  SUBCASE("dead node") {
    Builder b(1);
    auto x = b.input("x", {4, 4, 2}, -4);
    b.maxpool(x, "dead", 2, 2);
    auto y = b.add(x, x, "y", false);
    CHECK_THROWS_AS(b.finish({y}), ParseError);
  }
}

TEST_CASE("folding removes constants and quantizers without changing results") {
  for (auto& [name, g] : support::corpus()) {
    INFO(name);
    const Graph f = fold_constants_and_quantizers(g);
    for (auto& n : f.nodes) {
      CHECK(n.op != OpKind::Param);
      CHECK(n.op != OpKind::FixNeuron);
      if (n.op == OpKind::Conv || n.op == OpKind::Deconv) CHECK(n.params.has_value());
    }
    for (uint64_t s = 0; s < 3; ++s) {
      const auto in = sim::random_inputs(g, s);
      CHECK(support::same_outputs(g, sim::reference_execute(g, in), sim::reference_execute(f, in)));
      CHECK(support::same_outputs(g, sim::reference_execute(g, in), oracle::run(f, in)));
    }
  }
}

TEST_CASE("folding requantizes weights stored at a finer step") {
  const Graph g = support::load("toy_conv");
  const Graph f = fold_constants_and_quantizers(g);
  const Node& raw = g.nodes.at(g.producer_index("y/w_raw"));
  const auto& w = *f.nodes.back().params;
  REQUIRE(raw.constant);
  for (size_t i = 0; i < w.weights.size(); ++i) CHECK(w.weights[i] == quant::saturate8(shift_oracle(raw.constant->values[i], 1)));
}

TEST_CASE("a quantizer between differently scaled int8 tensors becomes a copy") {
  Graph g = tiny_conv();
  g.tensors["z"] = g.tensors["y"];
  g.tensors["z"].name = "z";
  g.tensors["z"].quant = {-128 * 8.0, 127 * 8.0, 8.0};
  Node fix;
  fix.id = 50;
  fix.op = OpKind::FixNeuron;
  fix.inputs = {"y"};
  fix.output = "z";
  g.nodes.push_back(fix);
  g.outputs = {"z"};
  validate(g);
  const Graph f = fold_constants_and_quantizers(g);
  CHECK(f.node(50).op == OpKind::Identity);
  const auto in = sim::random_inputs(g, 4);
  CHECK(support::same_outputs(g, sim::reference_execute(g, in), sim::reference_execute(f, in)));
}

TEST_CASE("superlayer fusion") {
  const hw::MachineConfig cfg;
  SUBCASE("conv followed by pool") {
    const Graph f = fuse_superlayers(fold_constants_and_quantizers(support::load("conv_pool")), cfg);
    REQUIRE(f.nodes.size() == 2);
    const Node& c = f.nodes.back();
    REQUIRE(c.fused);
    CHECK(c.fused->kind == OpKind::MaxPool);
    CHECK(c.output == "y");
    CHECK(c.fused->intermediate.name == "c");
  }
  SUBCASE("residual add keeps the shortcut as second input") {
    const Graph f = fuse_superlayers(fold_constants_and_quantizers(support::load("resnet_cell")), cfg);
    const Node* fused = nullptr;
    for (auto& n : f.nodes)
      if (n.fused) fused = &n;
    REQUIRE(fused);
    CHECK(fused->fused->kind == OpKind::EltwiseAdd);
    CHECK(fused->inputs == std::vector<std::string>{"t", "x"});
  }
  SUBCASE("fusion preserves results") {
    for (auto& [name, g] : support::corpus()) {
      INFO(name);
      const Graph f = fuse_superlayers(fold_constants_and_quantizers(g), cfg);
      const auto in = sim::random_inputs(g, 11);
      CHECK(support::same_outputs(g, sim::reference_execute(g, in), sim::reference_execute(f, in)));
    }
  }
}

TEST_CASE("schedules") {
  const Graph g = fold_constants_and_quantizers(support::load("inception_cell"));
  const Schedule t = topological_schedule(g);
  CHECK(is_valid_schedule(g, t));
  CHECK(topological_schedule(g) == t);
  Schedule bad = t;
  std::reverse(bad.begin(), bad.end());
  CHECK_FALSE(is_valid_schedule(g, bad));
  const auto all = explore_schedules(g, 64);
  REQUIRE(all.size() > 1);
  for (size_t i = 0; i < all.size(); ++i) {
    CHECK(is_valid_schedule(g, all[i].schedule));
    CHECK(all[i].peak_bytes == peak_memory(g, all[i].schedule));
    if (i) CHECK(all[i - 1].peak_bytes <= all[i].peak_bytes);
  }
  CHECK(explore_schedules(g, 2).size() == 2);
}

TEST_CASE("mac counts") {
  const Graph g = fold_constants_and_quantizers(tiny_conv());
  CHECK(mac_count(g, g.nodes.back()) == 6 * 6 * 4 * 3 * 3 * 3);
  CHECK(mac_count(g, g.nodes.front()) == 0);
}
