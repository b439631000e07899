#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "dpuc/graph.hpp"

namespace dpuc::graph {

namespace {

constexpr size_t kEnumerationCap = 512;

// predecessor ids per node id
std::map<int, std::set<int>> predecessors(const Graph& g) {
  std::map<int, std::set<int>> pred;
  for (auto& n : g.nodes) {
    auto& p = pred[n.id];
    for (auto& i : n.inputs) p.insert(g.nodes[g.producer_index(i)].id);
  }
  return pred;
}

}  // namespace

Schedule topological_schedule(const Graph& g) {
  auto pred = predecessors(g);
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> succ;
  for (auto& [id, ps] : pred) {
    indeg[id] = static_cast<int>(ps.size());
    for (int p : ps) succ[p].push_back(id);
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (auto& [id, d] : indeg)
    if (d == 0) ready.push(id);
  Schedule s;
  while (!ready.empty()) {
    int id = ready.top();
    ready.pop();
    s.push_back(id);
    for (int c : succ[id])
      if (--indeg[c] == 0) ready.push(c);
  }
  if (s.size() != g.nodes.size()) throw CycleError("graph contains a cycle");
  return s;
}

bool is_valid_schedule(const Graph& g, const Schedule& s) {
  if (s.size() != g.nodes.size()) return false;
  auto pred = predecessors(g);
  std::set<int> done;
  for (int id : s) {
    auto it = pred.find(id);
    if (it == pred.end() || done.count(id)) return false;
    for (int p : it->second)
      if (!done.count(p)) return false;
    done.insert(id);
  }
  return true;
}

int64_t peak_memory(const Graph& g, const Schedule& s) {
  std::map<std::string, int> pending;  // unexecuted consumers per tensor
  for (auto& n : g.nodes)
    for (auto& i : n.inputs) ++pending[i];
  int64_t live = 0, peak = 0;
  std::set<std::string> resident;
  for (int id : s) {
    const Node& n = g.node(id);
    const auto& out = g.tensor(n.output);
    if (!out.is_param()) {
      live += out.bytes();
      resident.insert(n.output);
    }
    peak = std::max(peak, live);
    for (auto& i : n.inputs)
      if (--pending[i] == 0 && !g.is_output(i) && resident.erase(i)) live -= g.tensor(i).bytes();
    if (pending[n.output] == 0 && !g.is_output(n.output) && resident.erase(n.output)) live -= out.bytes();
  }
  return peak;
}

std::vector<ScheduleEstimate> explore_schedules(const Graph& g, int budget) {
  auto pred = predecessors(g);
  std::vector<int> ids;
  for (auto& [id, p] : pred) ids.push_back(id);
  std::vector<Schedule> found;
  Schedule cur;
  std::set<int> done;
  std::function<void()> rec = [&] {
    if (found.size() >= kEnumerationCap) return;
    if (cur.size() == ids.size()) {
      found.push_back(cur);
      return;
    }
    for (int id : ids) {
      if (done.count(id)) continue;
      bool ready = true;
      for (int p : pred[id]) ready = ready && done.count(p);
      if (!ready) continue;
      cur.push_back(id);
      done.insert(id);
      rec();
      done.erase(id);
      cur.pop_back();
    }
  };
  rec();
  if (found.empty()) throw CycleError("graph contains a cycle");
  std::vector<ScheduleEstimate> est;
  for (auto& s : found) est.push_back({s, peak_memory(g, s)});
  std::stable_sort(est.begin(), est.end(), [](auto& a, auto& b) { return a.peak_bytes < b.peak_bytes; });
  if (budget < 1) budget = 1;
  if (static_cast<int>(est.size()) > budget) est.resize(budget);
  return est;
}

}  // namespace dpuc::graph
