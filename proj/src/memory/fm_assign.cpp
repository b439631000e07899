#include <set>

#include "dpuc/memory.hpp"
#include "dpuc/pipeline.hpp"

namespace dpuc::mem {

namespace {

bool serializable(int a, int b) { return std::min(a, b) == pipe::kC && std::max(a, b) == pipe::kP; }

}  // namespace

FmAssignment assign_fm_memories(const std::vector<RingUse>& rings, int memories) {
  const int n = static_cast<int>(rings.size());
  std::vector<int> mem(n, 0);
  FmAssignment best;
  bool found = false;
  std::string why = "no rings";
  for (;;) {
    std::vector<std::set<int>> writers(memories), readers(memories);
    for (int i = 0; i < n; ++i) {
      writers[mem[i]].insert(rings[i].writer);
      for (int r : rings[i].readers) readers[mem[i]].insert(r);
    }
    std::set<std::pair<int, int>> serial;
    bool ok = true;
    for (auto* sets : {&writers, &readers})
      for (auto& s : *sets)
        for (int a : s)
          for (int b : s) {
            if (a >= b) continue;
            if (!serializable(a, b)) {
              ok = false;
              why = "stages " + std::to_string(a) + " and " + std::to_string(b) + " share a memory port";
            }
            serial.insert({a, b});
          }
    if (ok && (!found || serial.size() < best.serial.size())) {
      best.mem = mem;
      best.serial.assign(serial.begin(), serial.end());
      found = true;
    }
    int i = n - 1;
    while (i >= 0 && ++mem[i] == memories) mem[i--] = 0;
    if (i < 0) break;
  }
  if (!found) throw PortConflictError(why);
  return best;
}

}  // namespace dpuc::mem
