#include <algorithm>

#include "dpuc/lowering.hpp"

namespace dpuc::lower {

std::vector<WeightSlab> weight_tiling(const graph::WeightSpec& w, const hw::MachineConfig& cfg) {
  const int64_t per_co = int64_t{w.kh} * w.kw * w.ci;
  const int64_t total = per_co * w.co + 4 * int64_t{w.co};
  if (total <= cfg.pm_bytes) return {{{0, w.co}, per_co * w.co, 4 * int64_t{w.co}}};
  const int64_t max_co = (cfg.pm_bytes / 2) / (per_co + 4);
  if (max_co < 1) throw InfeasibleError("the weights of one output channel exceed half the parameter memory");
  const int n = static_cast<int>(ceil_div(w.co, max_co));
  const int step = static_cast<int>(ceil_div(w.co, n));
  std::vector<WeightSlab> slabs;
  for (int lo = 0; lo < w.co; lo += step) {
    const int hi = std::min(lo + step, w.co);
    slabs.push_back({{lo, hi}, per_co * (hi - lo), 4 * int64_t{hi - lo}});
  }
  return slabs;
}

}  // namespace dpuc::lower
