#include <deque>

#include "dpuc/sim.hpp"
#include "json.hpp"

namespace dpuc::sim {

double Trace::utilization(hw::OpType q) const {
  return makespan > 0 ? static_cast<double>(busy[static_cast<int>(q)]) / static_cast<double>(makespan) : 0.0;
}

Trace run_timing(const hw::Program& p, const hw::MachineConfig& cfg) {
  constexpr int Q = hw::kNumQueues;
  std::array<std::vector<int>, Q> queue;
  for (int i = 0; i < static_cast<int>(p.code.size()); ++i) queue[static_cast<int>(p.code[i].type)].push_back(i);
  // tokens[u][t]: completion times of queue-u instructions that signal queue t
  std::array<std::array<std::deque<int64_t>, Q>, Q> tokens;
  std::array<size_t, Q> head{};
  std::array<int64_t, Q> free_at{};
  Trace tr;
  tr.events.resize(p.code.size());
  size_t done = 0;
  while (done < p.code.size()) {
    bool progress = false;
    for (int q = 0; q < Q; ++q) {
      while (head[q] < queue[q].size()) {
        const int idx = queue[q][head[q]];
        const auto& ins = p.code[idx];
        bool ready = true;
        for (int u = 0; u < Q; ++u)
          if (ins.dpon.has(static_cast<hw::OpType>(u)) && tokens[u][q].empty()) ready = false;
        if (!ready) break;
        int64_t start = free_at[q];
        for (int u = 0; u < Q; ++u)
          if (ins.dpon.has(static_cast<hw::OpType>(u))) {
            start = std::max(start, tokens[u][q].front());
            tokens[u][q].pop_front();
          }
        const int64_t dur = hw::instruction_cost(ins, cfg);
        Event& e = tr.events[idx];
        e.index = idx;
        e.queue = ins.type;
        e.sub = ins.sub;
        e.issue = free_at[q];
        e.start = start;
        e.end = start + dur;
        e.color = std::string(hw::color_class(ins));
        free_at[q] = e.end;
        tr.busy[q] += dur;
        tr.makespan = std::max(tr.makespan, e.end);
        for (int t = 0; t < Q; ++t)
          if (ins.dpby.has(static_cast<hw::OpType>(t))) tokens[q][t].push_back(e.end);
        ++head[q];
        ++done;
        progress = true;
      }
    }
    if (!progress) {
      std::string where;
      for (int q = 0; q < Q; ++q)
        if (head[q] < queue[q].size()) where += " " + std::string(hw::to_string(static_cast<hw::OpType>(q))) + "@" + std::to_string(queue[q][head[q]]);
      throw DeadlockError("no queue can advance; blocked heads:" + where);
    }
  }
  return tr;
}

std::string to_json(const Trace& t) {
  nlohmann::json j;
  j["makespan"] = t.makespan;
  j["busy"] = nlohmann::json::object();
  j["utilization"] = nlohmann::json::object();
  for (hw::OpType q : hw::kAllTypes) {
    j["busy"][std::string(hw::to_string(q))] = t.busy[static_cast<int>(q)];
    j["utilization"][std::string(hw::to_string(q))] = t.utilization(q);
  }
  j["events"] = nlohmann::json::array();
  for (auto& e : t.events)
    j["events"].push_back({{"i", e.index},
                           {"queue", std::string(hw::to_string(e.queue))},
                           {"sub", std::string(hw::to_string(e.sub))},
                           {"issue", e.issue},
                           {"start", e.start},
                           {"end", e.end},
                           {"color", e.color}});
  return j.dump(1);
}

Trace trace_from_json(std::string_view text) {
  Trace t;
  try {
    const auto j = nlohmann::json::parse(text);
    t.makespan = j.at("makespan").get<int64_t>();
    for (auto& ej : j.at("events")) {
      Event e;
      e.index = ej.at("i").get<int>();
      const auto q = ej.at("queue").get<std::string>();
      for (hw::OpType x : hw::kAllTypes)
        if (q == hw::to_string(x)) e.queue = x;
      const auto s = ej.at("sub").get<std::string>();
      for (int k = 0; k <= static_cast<int>(hw::SubOp::Noop); ++k)
        if (s == hw::to_string(static_cast<hw::SubOp>(k))) e.sub = static_cast<hw::SubOp>(k);
      e.issue = ej.at("issue").get<int64_t>();
      e.start = ej.at("start").get<int64_t>();
      e.end = ej.at("end").get<int64_t>();
      e.color = ej.at("color").get<std::string>();
      t.busy[static_cast<int>(e.queue)] += e.end - e.start;
      t.events.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed trace: ") + e.what());
  }
  return t;
}

}  // namespace dpuc::sim
