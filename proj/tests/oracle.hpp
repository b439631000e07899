#pragma once

// Independent evaluator used as the test oracle. Values are carried as
// exact real numbers in doubles (all scales are powers of two, all sums stay
// far below 2^53); rounding is std::round, which rounds half away from zero.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dpuc/graph.hpp"
#include "dpuc/sim.hpp"

namespace oracle {

using dpuc::graph::Graph;
using dpuc::graph::Node;
using dpuc::graph::OpKind;
using dpuc::sim::Tensor;
using dpuc::sim::TensorMap;

struct Real {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;
  double& at(int y, int x, int k) { return v[(size_t(y) * w + x) * c + k]; }
  double at(int y, int x, int k) const { return v[(size_t(y) * w + x) * c + k]; }
};

inline Real real(const Tensor& t) {
  Real r{t.shape.h, t.shape.w, t.shape.c, {}};
  for (int8_t q : t.data) r.v.push_back(std::ldexp(static_cast<double>(q), t.exp));
  return r;
}

inline Tensor quantize(const Real& r, int exp, bool relu) {
  Tensor t{{r.h, r.w, r.c}, exp, {}};
  for (double x : r.v) {
    if (relu) x = std::max(x, 0.0);
    const double q = std::round(std::ldexp(x, -exp));
    t.data.push_back(static_cast<int8_t>(std::clamp(q, -128.0, 127.0)));
  }
  return t;
}

inline double weight(const dpuc::graph::WeightSpec& w, int o, int y, int x, int i) {
  return std::ldexp(static_cast<double>(w.weights[((size_t(o) * w.kh + y) * w.kw + x) * w.ci + i]), w.weight_exp);
}

// Bias aligned once to the accumulator scale.
inline double bias(const dpuc::graph::WeightSpec& w, int o, int acc_exp) {
  if (w.bias.empty()) return 0;
  return std::ldexp(std::round(std::ldexp(static_cast<double>(w.bias[o]), w.bias_exp - acc_exp)), acc_exp);
}

inline Real conv(const Real& x, const Node& n, int ex, int oh, int ow) {
  const auto& w = *n.params;
  Real y{oh, ow, w.co, std::vector<double>(size_t(oh) * ow * w.co)};
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      for (int o = 0; o < w.co; ++o) {
        double s = bias(w, o, ex + w.weight_exp);
        for (int ky = 0; ky < w.kh; ++ky)
          for (int kx = 0; kx < w.kw; ++kx) {
            const int iy = r * n.win.sh + ky - n.win.ph, ix = c * n.win.sw + kx - n.win.pw;
            if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
            for (int i = 0; i < w.ci; ++i) s += x.at(iy, ix, i) * weight(w, o, ky, kx, i);
          }
        y.at(r, c, o) = s;
      }
  return y;
}

// Transposed convolution as a scatter of every input pixel through the kernel.
inline Real deconv(const Real& x, const Node& n, int ex, int oh, int ow) {
  const auto& w = *n.params;
  const int s = n.factor;
  Real y{oh, ow, w.co, std::vector<double>(size_t(oh) * ow * w.co)};
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      for (int o = 0; o < w.co; ++o) y.at(r, c, o) = bias(w, o, ex + w.weight_exp);
  for (int iy = 0; iy < x.h; ++iy)
    for (int ix = 0; ix < x.w; ++ix)
      for (int ky = 0; ky < w.kh; ++ky)
        for (int kx = 0; kx < w.kw; ++kx) {
          const int r = iy * s - ky + n.win.ph, c = ix * s - kx + n.win.pw;
          if (r < 0 || c < 0 || r >= oh || c >= ow) continue;
          for (int o = 0; o < w.co; ++o)
            for (int i = 0; i < w.ci; ++i) y.at(r, c, o) += x.at(iy, ix, i) * weight(w, o, ky, kx, i);
        }
  return y;
}

inline Real maxpool(const Real& x, const dpuc::graph::Window& p, int oh, int ow) {
  Real y{oh, ow, x.c, std::vector<double>(size_t(oh) * ow * x.c, -1e300)};
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      for (int ky = 0; ky < p.kh; ++ky)
        for (int kx = 0; kx < p.kw; ++kx) {
          const int iy = r * p.sh + ky - p.ph, ix = c * p.sw + kx - p.pw;
          if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
          for (int k = 0; k < x.c; ++k) y.at(r, c, k) = std::max(y.at(r, c, k), x.at(iy, ix, k));
        }
  return y;
}

// Evaluates a folded, unfused graph. Returns every int8 tensor.
inline TensorMap run(const Graph& g, const TensorMap& inputs) {
  TensorMap t = inputs;
  std::vector<const Node*> todo;
  for (auto& n : g.nodes)
    if (n.op != OpKind::Input) todo.push_back(&n);
  while (!todo.empty()) {
    for (auto it = todo.begin(); it != todo.end(); ++it) {
      const Node& n = **it;
      if (!std::all_of(n.inputs.begin(), n.inputs.end(), [&](const std::string& s) { return t.count(s) > 0; })) continue;
      const auto& out = g.tensor(n.output);
      const int eo = out.quant.exponent(), oh = out.shape.h, ow = out.shape.w;
      const Tensor& x = t.at(n.inputs[0]);
      Real y;
      bool relu = n.relu;
      switch (n.op) {
        case OpKind::Conv: y = conv(real(x), n, x.exp, oh, ow); break;
        case OpKind::Deconv: y = deconv(real(x), n, x.exp, oh, ow); break;
        case OpKind::MaxPool: y = maxpool(real(x), n.win, oh, ow); break;
        case OpKind::EltwiseAdd: {
          y = real(x);
          const Real b = real(t.at(n.inputs[1]));
          for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += b.v[i];
          break;
        }
        case OpKind::Upsample: {
          const Real a = real(x);
          y = Real{oh, ow, a.c, std::vector<double>(size_t(oh) * ow * a.c, 0.0)};
          for (int r = 0; r < a.h; ++r)
            for (int c = 0; c < a.w; ++c)
              for (int k = 0; k < a.c; ++k) y.at(r * n.factor, c * n.factor, k) = a.at(r, c, k);
          break;
        }
        case OpKind::Identity: y = real(x); break;
        case OpKind::Concat: {
          y = Real{oh, ow, out.shape.c, std::vector<double>(size_t(oh) * ow * out.shape.c)};
          int base = 0;
          for (auto& name : n.inputs) {
            const Real a = real(t.at(name));
            for (int r = 0; r < oh; ++r)
              for (int c = 0; c < ow; ++c)
                for (int k = 0; k < a.c; ++k) y.at(r, c, base + k) = a.at(r, c, k);
            base += a.c;
          }
          relu = false;
          break;
        }
        default: throw std::runtime_error("oracle: unsupported op");
      }
      t[n.output] = quantize(y, eo, relu);
      todo.erase(it);
      break;
    }
  }
  return t;
}

}  // namespace oracle
