#include <algorithm>

#include "dpuc/lowering.hpp"

namespace dpuc::lower {

FusionPlan plan_fusion(const OpGeom& conv, graph::OpKind consumer, const graph::Window& pool,
                       const hw::MachineConfig& cfg) {
  FusionPlan p;
  const int hc = cfg.h_conv;
  if (consumer == graph::OpKind::MaxPool) {
    p.consumer_out_h = std::max(1, cfg.h_pool / pool.sh);
    p.consumer_h = p.consumer_out_h * pool.sh;
    p.footprint = (p.consumer_out_h - 1) * pool.sh + pool.kh;
  } else if (consumer == graph::OpKind::EltwiseAdd) {
    p.consumer_out_h = p.consumer_h = p.footprint = cfg.h_eltwise;
  } else {
    p.reason = "consumer cannot be fused";
    return p;
  }
  p.k = hc / p.consumer_h;
  if (p.k < 1) {
    p.reason = "consumer tile taller than conv tile";
    return p;
  }
  p.conv_h = p.k * p.consumer_h;
  if (2 * p.conv_h < hc) {
    p.reason = "conv tile would shrink below half its preferred height";
    return p;
  }
  const int64_t in_row = fm_row_pitch(std::min<int64_t>(int64_t{conv.in_w} * conv.in_c, cfg.gamma), cfg);
  const int64_t mid_row = fm_row_pitch(std::min<int64_t>(int64_t{conv.out_w} * conv.out_c, cfg.gamma), cfg);
  const int64_t in_rows = int64_t{p.conv_h - 1} * conv.win.sh + conv.win.kh;
  if (2 * in_rows * in_row > cfg.fm_bytes() || int64_t{2 * p.conv_h + p.footprint} * mid_row > cfg.fm_bytes()) {
    p.reason = "fused tiles do not fit feature-map memory";
    return p;
  }
  p.enabled = true;
  return p;
}

}  // namespace dpuc::lower
