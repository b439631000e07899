#include "dpuc/lowering.hpp"

namespace dpuc::lower {

namespace {

int pos_mod(int a, int m) { return ((a % m) + m) % m; }

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

struct AxisPhase {
  std::vector<int> taps;
  int off = 0;
  int count = 0;
};

AxisPhase axis_phase(int phase, int k, int s, int p, int out_extent) {
  AxisPhase a;
  for (int t = 0; t < k; ++t)
    if (pos_mod(t + phase - p, s) == 0) a.taps.push_back(t);
  if (a.taps.empty()) throw UnsupportedError("deconv kernel smaller than its stride leaves an empty phase");
  a.off = floor_div(phase + a.taps.front() - p, s);
  a.count = out_extent > phase ? (out_extent - phase + s - 1) / s : 0;
  return a;
}

}  // namespace

std::vector<PhaseKernel> decompose_deconv(const graph::WeightSpec& w, int stride, int pad, int in_h, int in_w) {
  if (stride < 1 || stride > 2) throw UnsupportedError("deconv stride " + std::to_string(stride) + " is not supported");
  const int out_h = in_h * stride + 2 * pad - w.kh + 1;
  const int out_w = in_w * stride + 2 * pad - w.kw + 1;
  std::vector<PhaseKernel> out;
  for (int ph = 0; ph < stride; ++ph) {
    const AxisPhase ah = axis_phase(ph, w.kh, stride, pad, out_h);
    for (int pw = 0; pw < stride; ++pw) {
      const AxisPhase aw = axis_phase(pw, w.kw, stride, pad, out_w);
      PhaseKernel k;
      k.phase_h = ph, k.phase_w = pw;
      k.taps_h = ah.taps, k.taps_w = aw.taps;
      k.off_h = ah.off, k.off_w = aw.off;
      k.out_h = ah.count, k.out_w = aw.count;
      const int th = static_cast<int>(k.taps_h.size()), tw = static_cast<int>(k.taps_w.size());
      k.weights.reserve(size_t(w.co) * th * tw * w.ci);
      for (int o = 0; o < w.co; ++o)
        for (int i = 0; i < th; ++i)
          for (int j = 0; j < tw; ++j)
            for (int c = 0; c < w.ci; ++c)
              k.weights.push_back(w.weights[((size_t(o) * w.kh + k.taps_h[i]) * w.kw + k.taps_w[j]) * w.ci + c]);
      out.push_back(std::move(k));
    }
  }
  return out;
}

}  // namespace dpuc::lower
