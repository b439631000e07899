#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dpuc/graph.hpp"
#include "dpuc/sim.hpp"
#include "dpuc/util.hpp"

namespace support {

inline std::string read_text(const std::string& path) {
  const auto b = dpuc::read_file(path);
  return {b.begin(), b.end()};
}

inline std::string corpus_path(const std::string& name) { return std::string(DPUC_CORPUS_DIR) + "/" + name; }

inline dpuc::graph::Graph load(const std::string& name) {
  return dpuc::graph::parse_graph(read_text(corpus_path(name + ".json")));
}

inline std::vector<std::pair<std::string, dpuc::graph::Graph>> corpus() {
  std::vector<std::string> names;
  for (auto& e : std::filesystem::directory_iterator(DPUC_CORPUS_DIR)) {
    const auto f = e.path().filename().string();
    if (e.path().extension() == ".json" && f.find(".config.") == std::string::npos) names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<std::pair<std::string, dpuc::graph::Graph>> out;
  for (auto& n : names) out.push_back({n, load(n)});
  return out;
}

inline bool same_outputs(const dpuc::graph::Graph& g, const dpuc::sim::TensorMap& a, const dpuc::sim::TensorMap& b) {
  for (auto& o : g.outputs)
    if (!a.count(o) || !b.count(o) || a.at(o) != b.at(o)) return false;
  return true;
}

}  // namespace support
