#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "dpuc/compiler.hpp"
#include "dpuc/sim.hpp"

using namespace dpuc;

namespace {

std::string read_text(const std::string& path) {
  auto b = read_file(path);
  return {b.begin(), b.end()};
}

hw::MachineConfig config(const std::string& path) {
  if (!path.empty()) return hw::load_config(path);
  if (const char* env = std::getenv("DPUC_CONFIG"); env && *env) return hw::load_config(env);
  return {};
}

int cmd_compile(const std::string& graph, const std::string& cfg_path, const std::string& out, bool no_pipe, bool tiles,
                bool mem, const std::string& deconv) {
  CompileOptions opt;
  opt.pipelined = !no_pipe;
  opt.deconv_series = deconv == "series";
  const auto a = compile(graph::parse_graph(read_text(graph)), config(cfg_path), opt);
  write_artifacts(a, out, tiles);
  if (mem) std::cout << a.memmap_json();
  std::cout << "instructions " << a.program.code.size() << " makespan " << a.makespan << "\n";
  return 0;
}

int cmd_run(const std::string& dir, const std::string& cfg_path, const std::vector<std::string>& inputs,
            const std::string& mode, const std::string& out) {
  const auto cfg = config(cfg_path);
  const auto prog = hw::parse_assembly(read_text(dir + "/program.asm"));
  const auto params = read_file(dir + "/params.bin");
  std::filesystem::create_directories(out);
  if (mode == "functional" || mode == "both") {
    sim::TensorMap in;
    for (auto& spec : inputs) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw IoError("input must be name=path: " + spec);
      const std::string name = spec.substr(0, eq);
      const auto bytes = read_file(spec.substr(eq + 1));
      for (auto& t : prog.tensors)
        if (t.name == name) {
          sim::Tensor x{{t.h, t.w, t.c}, t.exp, {}};
          if (static_cast<int64_t>(bytes.size()) != x.shape.elems()) throw IoError("input '" + name + "' has the wrong size");
          x.data.assign(bytes.begin(), bytes.end());
          in[name] = std::move(x);
        }
      if (!in.count(name)) throw IoError("program has no input '" + name + "'");
    }
    for (auto& [name, t] : sim::execute_program(prog, cfg, params, in)) {
      std::string file = name;
      std::replace(file.begin(), file.end(), '/', '_');
      write_file(out + "/" + file + ".bin",
                 std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(t.data.data()), t.data.size()));
    }
  }
  if (mode == "timing" || mode == "both") {
    const auto tr = sim::run_timing(prog, cfg);
    write_file(out + "/trace.json", sim::to_json(tr));
    write_file(out + "/timeline.svg", sim::timeline_svg(tr));
    std::cout << "makespan " << tr.makespan << "\n";
    const auto hz = sim::check_hazards(prog, tr, cfg);
    for (auto& h : hz) std::cerr << h.kind << " at " << h.instr << " vs " << h.other << ": " << h.detail << "\n";
    if (!hz.empty()) return 2;
  }
  return 0;
}

int cmd_verify(const std::string& graph_path, const std::string& cfg_path, int seeds, const std::string& dir) {
  const auto cfg = config(cfg_path);
  const auto g = graph::parse_graph(read_text(graph_path));
  CompileArtifacts a;
  if (!dir.empty()) {
    a.program = hw::parse_assembly(read_text(dir + "/program.asm"));
    a.params = read_file(dir + "/params.bin");
  } else {
    try {
      a = compile(g, cfg);
    } catch (const Error& e) {
      std::cerr << "compile failed: " << e.what() << "\n";
      return 3;
    }
  }
  for (int s = 0; s < seeds; ++s) {
    const auto in = sim::random_inputs(g, static_cast<uint64_t>(s));
    const auto ref = sim::reference_execute(g, in);
    sim::TensorMap got;
    try {
      got = sim::execute_program(a.program, cfg, a.params, in);
    } catch (const Error& e) {
      std::cerr << "seed " << s << ": " << e.what() << "\n";
      return 1;
    }
    for (auto& name : g.outputs)
      if (!got.count(name) || got.at(name) != ref.at(name)) {
        std::cerr << "seed " << s << ": output '" << name << "' differs from the reference\n";
        return 1;
      }
  }
  const auto tr = sim::run_timing(a.program, cfg);
  const auto hz = sim::check_hazards(a.program, tr, cfg);
  for (auto& h : hz) std::cerr << h.kind << " at " << h.instr << " vs " << h.other << ": " << h.detail << "\n";
  if (!hz.empty()) return 2;
  std::cout << "pass " << seeds << " seeds, " << a.program.code.size() << " instructions, makespan " << tr.makespan << "\n";
  return 0;
}

int cmd_viz(const std::string& trace, const std::string& out, const std::string& format) {
  const auto t = sim::trace_from_json(read_text(trace));
  write_file(out, format == "json" ? sim::to_json(t) : sim::timeline_svg(t));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpuc: compiler and simulator for a tiled int8 DPU"};
  app.require_subcommand(1);
  std::string cfg_path;
  app.add_option("--config", cfg_path, "machine config JSON (default: $DPUC_CONFIG)");

  auto* c = app.add_subcommand("compile", "compile a graph to assembly and a parameter image");
  std::string graph, out = "out", deconv = "series";
  bool no_pipe = false, tiles = false, mem = false;
  c->add_option("graph", graph)->required();
  c->add_option("-o,--out", out);
  c->add_flag("--no-pipeline", no_pipe);
  c->add_flag("--dump-tiles", tiles);
  c->add_flag("--dump-mem", mem);
  c->add_option("--deconv", deconv)->check(CLI::IsMember({"series", "upsample"}));

  auto* r = app.add_subcommand("run", "simulate compiled artifacts");
  std::string dir, mode = "both", run_out = "run";
  std::vector<std::string> inputs;
  r->add_option("artifacts", dir)->required();
  r->add_option("-i,--input", inputs, "name=path of a raw int8 tensor");
  r->add_option("-m,--mode", mode)->check(CLI::IsMember({"functional", "timing", "both"}));
  r->add_option("-o,--out", run_out);

  auto* v = app.add_subcommand("verify", "compare compiled code against the reference on random inputs");
  std::string vgraph;
  int seeds = 10;
  v->add_option("graph", vgraph)->required();
  std::string vdir;
  v->add_option("--seeds", seeds);
  v->add_option("--artifacts", vdir, "check compiled artifacts instead of compiling");

  auto* z = app.add_subcommand("viz", "render a timing trace");
  std::string trace, zout = "timeline.svg", format = "svg";
  z->add_option("trace", trace)->required();
  z->add_option("-o,--out", zout);
  z->add_option("--format", format)->check(CLI::IsMember({"svg", "json"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*c) return cmd_compile(graph, cfg_path, out, no_pipe, tiles, mem, deconv);
    if (*r) return cmd_run(dir, cfg_path, inputs, mode, run_out);
    if (*v) return cmd_verify(vgraph, cfg_path, seeds, vdir);
    if (*z) return cmd_viz(trace, zout, format);
  } catch (const CompileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
