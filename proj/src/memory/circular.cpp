#include "dpuc/memory.hpp"

namespace dpuc::mem {

std::vector<LiveRange> compute_liveness(int num_slices, const std::vector<Access>& ops) {
  std::vector<LiveRange> live(num_slices);
  for (auto& op : ops) {
    for (int s : op.reads) {
      if (live.at(s).first < 0 || live[s].first > op.step)
        throw UseBeforeDefError("slice " + std::to_string(s) + " is read before it is written");
      live[s].last = std::max(live[s].last, op.step);
    }
    for (int s : op.writes) {
      if (live.at(s).first < 0 || op.step < live[s].first) live[s].first = op.step;
      live[s].last = std::max(live[s].last, op.step);
    }
  }
  for (auto& l : live) l.dead = l.first >= 0 && l.last == l.first;
  return live;
}

namespace {

// Overlap of [a, a + la) and [b, b + lb) on a ring of size n.
bool ring_overlap(int64_t a, int64_t la, int64_t b, int64_t lb, int64_t n) {
  if (la == 0 || lb == 0) return false;
  const int64_t d = ((b - a) % n + n) % n;  // b relative to a
  return d < la || n - d < lb;
}

}  // namespace

std::vector<CircularAlloc> allocate_circular(const std::vector<int>& slices, const std::vector<int64_t>& sizes,
                                             const std::vector<LiveRange>& live, int mem, int64_t capacity) {
  std::vector<CircularAlloc> out(sizes.size());
  std::vector<int> placed;
  int64_t next = 0;
  for (int s : slices) {
    const int64_t len = sizes.at(s);
    if (len > capacity)
      throw OutOfMemoryError("buffer of " + std::to_string(len) + " bytes exceeds a ring of " + std::to_string(capacity));
    CircularAlloc a{mem, next, len, next + len > capacity};
    for (int t : placed) {
      if (live[t].last < live[s].first) continue;
      if (ring_overlap(a.start, len, out[t].start, out[t].length, capacity))
        throw OutOfMemoryError("ring of " + std::to_string(capacity) + " bytes in memory " + std::to_string(mem) +
                               " cannot hold all live buffers");
    }
    out[s] = a;
    placed.push_back(s);
    next = (next + len) % capacity;
  }
  return out;
}

}  // namespace dpuc::mem
