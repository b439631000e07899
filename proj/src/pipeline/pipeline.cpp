#include "dpuc/pipeline.hpp"

#include <algorithm>
#include <map>

namespace dpuc::pipe {

hw::OpType queue_of(int stage) {
  switch (stage) {
    case kL: return hw::OpType::Load;
    case kC: return hw::OpType::Conv;
    case kP: return hw::OpType::Misc;
    default: return hw::OpType::Save;
  }
}

namespace {

bool serial_has(const Options& opt, int a, int b) {
  return std::find(opt.serial.begin(), opt.serial.end(), std::make_pair(a, b)) != opt.serial.end();
}

void sort_issue_order(std::vector<StageInstance>& v) {
  std::stable_sort(v.begin(), v.end(), [](const StageInstance& a, const StageInstance& b) {
    return a.group != b.group ? a.group < b.group : a.stage < b.stage;
  });
}

}  // namespace

Stream pipeline(const std::vector<StageSeq>& tiles, const Options& opt) {
  for (auto [a, b] : opt.serial)
    if (a >= b) throw EncodingError("serialized stage pair must follow issue order");
  Stream s;
  s.pipelined = opt.pipelined;
  const int k = static_cast<int>(tiles.size());
  std::array<int, kNumStages> first_group, last_group;
  first_group.fill(-1);
  last_group.fill(-1);
  for (int j = 0; j < k; ++j)
    for (int st = 0; st < kNumStages; ++st) {
      if (tiles[j].items[st].empty()) continue;
      StageInstance in;
      in.tile = j;
      in.stage = st;
      in.group = j + st;
      in.items = tiles[j].items[st];
      if (first_group[st] < 0) first_group[st] = in.group;
      last_group[st] = in.group;
      s.inst.push_back(std::move(in));
    }
  int present = 0;
  for (int g : first_group) present += g >= 0;
  for (auto& in : s.inst) s.groups = std::max(s.groups, in.group + 1);
  s.head_end = std::min(std::max(present - 1, 0), k);
  s.tail_begin = k;

  if (!opt.pipelined) {
    // tile-major order; each stage waits for the one before it
    for (size_t i = 1; i < s.inst.size(); ++i) s.inst[i].needs.push_back({s.inst[i - 1].stage, s.inst[i - 1].group});
    return s;
  }

  // waits already issued per (waiting stage, awaited stage)
  std::map<std::pair<int, int>, int> waited;
  for (auto& in : s.inst) {
    for (int t = 0; t < kNumStages; ++t) {
      if (t == in.stage) continue;
      int target = serial_has(opt, t, in.stage) ? in.group : in.group - 1;
      if (target < 0) continue;
      // a stage type that has not started yet imposes nothing
      if (first_group[t] < 0 || first_group[t] > target) continue;
      // a finished stage type is awaited once, at its last instance
      if (target > last_group[t]) {
        target = last_group[t];
        auto it = waited.find({in.stage, t});
        if (it != waited.end() && it->second == target) continue;
      }
      waited[{in.stage, t}] = target;
      in.needs.push_back({t, target});
    }
  }
  sort_issue_order(s.inst);
  return s;
}

void insert_noops(Stream& s) {
  std::map<std::pair<int, int>, bool> exists;
  for (auto& in : s.inst) exists[{in.stage, in.group}] = true;
  std::vector<StageInstance> extra;
  for (auto& in : s.inst)
    for (auto key : in.needs) {
      if (exists[key]) continue;
      exists[key] = true;
      StageInstance n;
      n.stage = key.first;
      n.group = key.second;
      n.tile = key.second - key.first;
      n.noop = true;
      extra.push_back(n);
    }
  if (extra.empty()) return;
  for (auto& e : extra) s.inst.push_back(std::move(e));
  sort_issue_order(s.inst);
}

void assign_typed_deps(Stream& s) {
  std::map<std::pair<int, int>, int> index;
  for (int i = 0; i < static_cast<int>(s.inst.size()); ++i) index[{s.inst[i].stage, s.inst[i].group}] = i;
  for (auto& in : s.inst) in.dpon = in.dpby = {};
  // edges per (producer queue, consumer queue), as (producer, consumer) issue positions
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edges;
  for (int c = 0; c < static_cast<int>(s.inst.size()); ++c) {
    auto& cons = s.inst[c];
    for (auto key : cons.needs) {
      auto it = index.find(key);
      if (it == index.end())
        throw EncodingError("no instruction of type " + std::string(hw::to_string(queue_of(key.first))) + " in group " +
                            std::to_string(key.second) + " to wait for");
      const int p = it->second;
      if (p >= c) throw EncodingError("dependency on an instruction issued later");
      auto& prod = s.inst[p];
      const auto tp = queue_of(prod.stage), tc = queue_of(cons.stage);
      if (tp == tc) continue;
      cons.dpon.add(tp);
      prod.dpby.add(tc);
      edges[{prod.stage, cons.stage}].push_back({p, c});
    }
  }
  for (auto& [pair, list] : edges) {
    std::sort(list.begin(), list.end());
    for (size_t i = 1; i < list.size(); ++i) {
      if (list[i].first == list[i - 1].first) throw EncodingError("one producer signals the same queue twice");
      if (list[i].second <= list[i - 1].second) throw EncodingError("typed dependencies cross; counting order would mismatch");
    }
  }
}

Stream build_stream(const std::vector<StageSeq>& tiles, const Options& opt) {
  Stream s = pipeline(tiles, opt);
  insert_noops(s);
  assign_typed_deps(s);
  return s;
}

std::vector<Item> flatten(const Stream& s) {
  std::vector<Item> out;
  for (auto& in : s.inst) {
    const size_t n = in.noop ? 1 : in.items.size();
    for (size_t i = 0; i < n; ++i) {
      Item it;
      it.handle = in.noop ? -1 : in.items[i];
      it.type = queue_of(in.stage);
      it.group = in.group;
      it.tile = in.tile;
      it.stage = in.stage;
      if (i == 0) it.dpon = in.dpon;
      if (i + 1 == n) it.dpby = in.dpby;
      out.push_back(it);
    }
  }
  return out;
}

}  // namespace dpuc::pipe
