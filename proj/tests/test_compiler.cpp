#include <filesystem>

#include "doctest.h"
#include "dpuc/builder.hpp"
#include "dpuc/compiler.hpp"
#include "dpuc/sim.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace dpuc;

namespace {

bool matches_reference(const graph::Graph& g, const CompileArtifacts& a, const hw::MachineConfig& cfg,
                       const std::vector<uint8_t>& params, int seeds) {
  for (int s = 0; s < seeds; ++s) {
    const auto in = sim::random_inputs(g, s);
    if (!support::same_outputs(g, sim::execute_program(a.program, cfg, params, in), sim::reference_execute(g, in)))
      return false;
  }
  return true;
}

int count_op(const graph::Graph& g, graph::OpKind op) {
  return static_cast<int>(std::count_if(g.nodes.begin(), g.nodes.end(), [&](auto& n) { return n.op == op; }));
}

}  // namespace

TEST_CASE("pipelined and sequential programs compute the reference") {
  const hw::MachineConfig cfg;
  for (auto& [name, g] : support::corpus()) {
    INFO(name);
    const auto pipe = compile(g, cfg);
    const auto seq = compile(g, cfg, {false});
    CHECK(matches_reference(g, pipe, cfg, pipe.params, 3));
    CHECK(matches_reference(g, seq, cfg, seq.params, 3));
    CHECK(pipe.makespan <= seq.makespan);
    CHECK(pipe.makespan == sim::run_timing(pipe.program, cfg).makespan);
    CHECK(sim::check_hazards(pipe.program, sim::run_timing(pipe.program, cfg), cfg).empty());
    CHECK(pipe.instr_node.size() == pipe.program.code.size());
    CHECK(pipe.instr_group.size() == pipe.program.code.size());
    CHECK(pipe.instr_tile.size() == pipe.program.code.size());
  }
}

TEST_CASE("narrow row vectors force width chunks") {
  const auto cfg = hw::load_config(support::corpus_path("narrow_gamma.config.json"));
  const auto g = support::load("weight_tiled");
  const auto a = compile(g, cfg);
  CHECK(matches_reference(g, a, cfg, a.params, 2));
  int chunks = 0;
  for (auto& n : a.nodes) chunks = std::max(chunks, n.chunks);
  CHECK(chunks >= 2);
}

TEST_CASE("deconvolution lowers either as a series or through upsampling") {
  const hw::MachineConfig cfg;
  const auto g = support::load("deconv");
  const auto series = compile(g, cfg);
  const auto up = compile(g, cfg, {true, true, false});
  CHECK(count_op(series.graph, graph::OpKind::Deconv) == 1);
  CHECK(count_op(up.graph, graph::OpKind::Deconv) == 0);
  CHECK(count_op(up.graph, graph::OpKind::Upsample) == 1);
  CHECK(matches_reference(g, series, cfg, series.params, 2));
  CHECK(matches_reference(g, up, cfg, up.params, 2));
  CHECK(series.makespan < up.makespan);
}

TEST_CASE("concat inputs that cannot be written in place get a copy") {
  const hw::MachineConfig cfg;
  graph::Builder b(7);
  auto x = b.input("x", {6, 6, 4}, -4);
  auto c = b.conv(x, "c", 4, 3, 1, 1, false, false);
  const auto g = b.finish({b.concat({c, x}, "y", b.exp(c))});
  const auto p = prepare_graph(g, cfg, {});
  CHECK(count_op(p, graph::OpKind::Identity) == 1);
  const auto a = compile(g, cfg);
  CHECK(matches_reference(g, a, cfg, a.params, 2));
}

TEST_CASE("a corrupted parameter image changes the outputs") {
  const hw::MachineConfig cfg;
  const auto g = support::load("resnet_cell");
  const auto a = compile(g, cfg);
  auto bad = a.params;
  for (auto& v : bad) v ^= 0x55;
  CHECK(matches_reference(g, a, cfg, a.params, 1));
  CHECK_FALSE(matches_reference(g, a, cfg, bad, 1));
}

TEST_CASE("graphs beyond the machine fail to compile") {
  hw::MachineConfig cfg;
  graph::Builder b(9);
  auto x = b.input("x", {2, 2, 9000}, -4);
  const auto g = b.finish({b.conv(x, "y", 4, 1, 1, 0, false, false)});
  CHECK_THROWS_AS(compile(g, cfg), CompileError);
}

TEST_CASE("artifacts on disk") {
  const hw::MachineConfig cfg;
  const auto a = compile(support::load("conv_pool"), cfg);
  const auto dir = std::filesystem::temp_directory_path() / "dpuc_artifacts_test";
  std::filesystem::remove_all(dir);
  write_artifacts(a, dir.string(), true);
  for (const char* f : {"program.asm", "params.bin", "memmap.json", "report.json", "tiles.json"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(hw::parse_assembly(support::read_text((dir / "program.asm").string())) == a.program);
  CHECK(std::filesystem::file_size(dir / "params.bin") == a.params.size());
  const auto report = nlohmann::json::parse(support::read_text((dir / "report.json").string()));
  CHECK(report.at("makespan").get<int64_t>() == a.makespan);
  const auto tiles = nlohmann::json::parse(support::read_text((dir / "tiles.json").string()));
  CHECK(tiles.size() == a.nodes.size());
  std::filesystem::remove_all(dir);
}
