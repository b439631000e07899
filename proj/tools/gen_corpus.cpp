#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "dpuc/builder.hpp"
#include "dpuc/hw.hpp"

using namespace dpuc;
using namespace dpuc::graph;

namespace {

Graph toy_conv() {
  Builder b(1);
  auto x = b.input("x", {8, 8, 4}, -4);
  return b.finish({b.conv(x, "y", 8, 3, 1, 1, true, true)});
}

Graph conv_pool() {
  Builder b(2);
  auto x = b.input("x", {68, 16, 8}, -4);
  auto c = b.conv(x, "c", 8, 5, 1, 0, true, false);
  return b.finish({b.maxpool(c, "y", 2, 2)});
}

Graph resnet_cell() {
  Builder b(3);
  auto x = b.input("x", {16, 16, 16}, -4);
  auto t = b.conv(x, "t", 16, 3, 1, 1, true, false);
  auto u = b.conv(t, "u", 16, 3, 1, 1, false, false);
  return b.finish({b.add(u, x, "y", true)});
}

Graph inception_cell() {
  Builder b(4);
  auto x = b.input("x", {16, 16, 16}, -4);
  auto b1 = b.conv(x, "b1", 8, 1, 1, 0, true, false);
  auto r = b.conv(x, "b2r", 8, 1, 1, 0, true, false);
  auto b2 = b.conv(r, "b2", 16, 3, 1, 1, true, false);
  auto b3 = b.maxpool(x, "b3", 3, 1, 1);
  return b.finish({b.concat({b1, b2, b3}, "y", b.exp(b2))});
}

Graph deconv() {
  Builder b(5);
  auto x = b.input("x", {8, 8, 8}, -4);
  auto d = b.conv(x, "d", 8, 3, 2, 2, true, false, OpKind::Deconv);
  return b.finish({d});
}

Graph weight_tiled() {
  Builder b(6);
  auto x = b.input("x", {12, 12, 64}, -4);
  return b.finish({b.conv(x, "y", 64, 5, 1, 2, true, false)});
}

Graph vgg_prefix() {
  Builder b(7);
  auto x = b.input("x", {32, 32, 3}, -4);
  auto c1 = b.conv(x, "c1", 16, 3, 1, 1, true, true);
  auto c2 = b.conv(c1, "c2", 16, 3, 1, 1, true, false);
  auto p1 = b.maxpool(c2, "p1", 2, 2);
  auto c3 = b.conv(p1, "c3", 32, 3, 1, 1, true, true);
  auto c4 = b.conv(c3, "c4", 32, 3, 1, 1, true, false);
  return b.finish({b.maxpool(c4, "y", 2, 2)});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"writes the example graph corpus"};
  std::string out = "corpus";
  app.add_option("-o,--out", out);
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(out);
  const std::pair<const char*, Graph (*)()> graphs[] = {
      {"toy_conv", toy_conv},     {"conv_pool", conv_pool},       {"resnet_cell", resnet_cell}, {"inception_cell", inception_cell},
      {"deconv", deconv},         {"weight_tiled", weight_tiled}, {"vgg_prefix", vgg_prefix},
  };
  for (auto& [name, make] : graphs) {
    write_file(out + "/" + name + ".json", to_json(make()) + "\n");
    std::cout << name << "\n";
  }
  hw::MachineConfig narrow;
  narrow.gamma = 512;
  write_file(out + "/narrow_gamma.config.json", hw::to_json(narrow) + "\n");
  return 0;
}
