#pragma once

// Turns per-tile stage sequences into an issue-ordered instruction stream
// with typed dependencies. Stages are L (load), C (conv), P (misc) and S
// (save); tile j's stage s belongs to group j + s. In pipelined mode every
// stage instance of group g + 1 waits for all other stage types of group g,
// so groups execute as barriers while the stages inside a group overlap.

#include <array>
#include <utility>
#include <vector>

#include "dpuc/hw.hpp"

namespace dpuc::pipe {

enum Stage : int { kL = 0, kC = 1, kP = 2, kS = 3 };
inline constexpr int kNumStages = 4;

hw::OpType queue_of(int stage);

// Instruction handles (caller-defined indices) of one tile, per stage.
struct StageSeq {
  std::array<std::vector<int>, kNumStages> items;
};

struct StageInstance {
  int tile = 0;
  int stage = 0;
  int group = 0;
  bool noop = false;
  std::vector<int> items;
  std::vector<std::pair<int, int>> needs;  // producing (stage, group)
  hw::TypeSet dpon, dpby;
};

struct Stream {
  std::vector<StageInstance> inst;  // issue order
  int groups = 0;
  int head_end = 0;    // groups [0, head_end) are the prologue
  int tail_begin = 0;  // groups [tail_begin, groups) are the epilogue
  bool pipelined = true;
};

struct Options {
  bool pipelined = true;
  // (a, b): stage b of a group must wait for stage a of the same group.
  std::vector<std::pair<int, int>> serial;
};

// Skews tiles into groups and records which producer stages each instance
// waits for. Producers missing from a group are left for insert_noops.
Stream pipeline(const std::vector<StageSeq>& tiles, const Options& opt);

// Adds a no-op stage wherever a dependency names a stage type that has
// already run but has no instance in the producing group.
void insert_noops(Stream& s);

// Encodes dependencies as DPON/DPBY type sets. Throws EncodingError if a
// wait cannot be expressed by queue type alone.
void assign_typed_deps(Stream& s);

Stream build_stream(const std::vector<StageSeq>& tiles, const Options& opt);

struct Item {
  int handle = -1;  // -1 for a no-op
  hw::OpType type = hw::OpType::Load;
  hw::TypeSet dpon, dpby;
  int group = 0;
  int tile = 0;
  int stage = 0;
};

// Issue-ordered instructions. DPON goes on the first instruction of a stage
// instance and DPBY on its last.
std::vector<Item> flatten(const Stream& s);

}  // namespace dpuc::pipe
