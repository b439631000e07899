#include <climits>
#include <random>

#include "dpuc/quant.hpp"
#include "dpuc/sim.hpp"

namespace dpuc::sim {

using graph::OpKind;

TensorMap random_inputs(const graph::Graph& g, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(-128, 127);
  TensorMap m;
  for (auto& name : g.inputs) {
    const auto& t = g.tensor(name);
    Tensor x{t.shape, t.quant.exponent(), {}};
    x.data.resize(t.shape.elems());
    for (auto& v : x.data) v = static_cast<int8_t>(dist(rng));
    m[name] = std::move(x);
  }
  return m;
}

namespace {

struct Val {
  graph::Shape shape;
  int exp = 0;
  std::vector<int32_t> v;
  int32_t at(int h, int w, int c) const { return v[(size_t(h) * shape.w + w) * shape.c + c]; }
};

int32_t clamp32(int64_t x) { return static_cast<int32_t>(std::clamp<int64_t>(x, INT32_MIN, INT32_MAX)); }

Val requant(const Val& in, int to_exp, bool int8, bool relu) {
  Val o{in.shape, to_exp, {}};
  o.v.reserve(in.v.size());
  for (int32_t x : in.v) {
    if (int8) o.v.push_back(quant::requantize(x, in.exp, to_exp, relu));
    else o.v.push_back(clamp32(quant::shift_round(relu && x < 0 ? 0 : x, to_exp - in.exp)));
  }
  return o;
}

struct Kernel {
  int co, kh, kw, ci;
  std::vector<int32_t> w;
  int wexp;
  std::vector<int32_t> b;
  int bexp;
};

// Accumulators of a stride/pad convolution; positions outside x read zero.
std::vector<int64_t> convolve(const Val& x, const Kernel& k, const graph::Window& win, int oh, int ow, int acc_exp) {
  std::vector<int64_t> acc(size_t(oh) * ow * k.co, 0);
  for (int o = 0; o < k.co; ++o) {
    const int64_t bias = k.b.empty() ? 0 : quant::align_bias(k.b[o], k.bexp, acc_exp);
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        int64_t s = bias;
        for (int i = 0; i < k.kh; ++i) {
          const int y = r * win.sh - win.ph + i;
          if (y < 0 || y >= x.shape.h) continue;
          for (int j = 0; j < k.kw; ++j) {
            const int xx = c * win.sw - win.pw + j;
            if (xx < 0 || xx >= x.shape.w) continue;
            for (int m = 0; m < k.ci; ++m)
              s += int64_t{x.at(y, xx, m)} * k.w[((size_t(o) * k.kh + i) * k.kw + j) * k.ci + m];
          }
        }
        acc[(size_t(r) * ow + c) * k.co + o] = s;
      }
  }
  return acc;
}

Val maxpool(const Val& x, const graph::Window& w, graph::Shape out) {
  Val o{out, x.exp, std::vector<int32_t>(out.elems())};
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c)
      for (int k = 0; k < out.c; ++k) {
        int32_t m = INT32_MIN;
        for (int i = 0; i < w.kh; ++i)
          for (int j = 0; j < w.kw; ++j) {
            const int y = r * w.sh - w.ph + i, xx = c * w.sw - w.pw + j;
            if (y >= 0 && y < x.shape.h && xx >= 0 && xx < x.shape.w) m = std::max(m, x.at(y, xx, k));
          }
        o.v[(size_t(r) * out.w + c) * out.c + k] = m;
      }
  return o;
}

Val upsample(const Val& x, int s) {
  graph::Shape out{x.shape.h * s, x.shape.w * s, x.shape.c};
  Val o{out, x.exp, std::vector<int32_t>(out.elems(), 0)};
  for (int r = 0; r < x.shape.h; ++r)
    for (int c = 0; c < x.shape.w; ++c)
      for (int k = 0; k < x.shape.c; ++k) o.v[(size_t(r * s) * out.w + c * s) * out.c + k] = x.at(r, c, k);
  return o;
}

Val add(const Val& a, const Val& b, int exp, bool relu) {
  Val o{a.shape, exp, {}};
  for (size_t i = 0; i < a.v.size(); ++i) o.v.push_back(quant::add(a.v[i], a.exp, b.v[i], b.exp, exp, relu));
  return o;
}

}  // namespace

TensorMap reference_execute(const graph::Graph& g, const TensorMap& inputs) {
  std::map<std::string, Val> vals;
  for (int id : graph::topological_schedule(g)) {
    const auto& n = g.node(id);
    const auto& out = g.tensor(n.output);
    const bool int8 = out.dtype == graph::DType::Int8;
    const int oexp = out.quant.exponent();
    auto in = [&](size_t i) -> const Val& { return vals.at(n.inputs.at(i)); };
    Val r;
    switch (n.op) {
      case OpKind::Input: {
        auto it = inputs.find(n.output);
        if (it == inputs.end()) throw Error("missing value for graph input '" + n.output + "'");
        if (it->second.shape != out.shape) throw ShapeError("input '" + n.output + "' has the wrong shape");
        r = {out.shape, oexp, std::vector<int32_t>(it->second.data.begin(), it->second.data.end())};
        break;
      }
      case OpKind::Param:
        r = {out.shape, oexp, n.constant->values};
        break;
      case OpKind::FixNeuron:
        r = requant(in(0), oexp, int8, false);
        break;
      case OpKind::Identity:
        r = requant(in(0), oexp, true, n.relu);
        break;
      case OpKind::Conv:
      case OpKind::Deconv: {
        Kernel k;
        if (n.params) {
          const auto& w = *n.params;
          k = {w.co, w.kh, w.kw, w.ci, std::vector<int32_t>(w.weights.begin(), w.weights.end()), w.weight_exp, w.bias, w.bias_exp};
        } else {
          const auto& wt = g.tensor(n.inputs[1]);
          k = {wt.dims[0], wt.dims[1], wt.dims[2], wt.dims[3], in(1).v, in(1).exp, {}, 0};
          if (n.inputs.size() > 2) k.b = in(2).v, k.bexp = in(2).exp;
        }
        Val x = in(0);
        graph::Window win = n.win;
        if (n.op == OpKind::Deconv) {
          x = upsample(x, n.factor);
          win.sh = win.sw = 1;
        }
        const int acc_exp = x.exp + k.wexp;
        const graph::Shape t = n.fused ? n.fused->intermediate.shape : out.shape;
        auto acc = convolve(x, k, win, t.h, t.w, acc_exp);
        if (!int8) {
          r = {t, acc_exp, {}};
          for (int64_t a : acc) r.v.push_back(clamp32(n.relu && a < 0 ? 0 : a));
          break;
        }
        const int texp = n.fused ? n.fused->intermediate.quant.exponent() : oexp;
        Val tv{t, texp, {}};
        for (int64_t a : acc) tv.v.push_back(quant::requantize(a, acc_exp, texp, n.relu));
        if (!n.fused) r = std::move(tv);
        else if (n.fused->kind == OpKind::MaxPool) r = maxpool(tv, n.fused->pool, out.shape);
        else r = add(tv, in(1), oexp, n.fused->relu);
        break;
      }
      case OpKind::MaxPool:
        r = maxpool(in(0), n.win, out.shape);
        break;
      case OpKind::EltwiseAdd:
        r = add(in(0), in(1), oexp, n.relu);
        break;
      case OpKind::Upsample:
        r = upsample(in(0), n.factor);
        break;
      case OpKind::Concat: {
        r = {out.shape, oexp, std::vector<int32_t>(out.shape.elems())};
        int off = 0;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          const Val q = requant(in(i), oexp, true, false);
          for (int h = 0; h < q.shape.h; ++h)
            for (int w = 0; w < q.shape.w; ++w)
              for (int c = 0; c < q.shape.c; ++c) r.v[(size_t(h) * out.shape.w + w) * out.shape.c + off + c] = q.at(h, w, c);
          off += q.shape.c;
        }
        break;
      }
    }
    vals[n.output] = std::move(r);
  }
  TensorMap result;
  for (auto& [name, v] : vals) {
    const auto& t = g.tensor(name);
    if (t.dtype != graph::DType::Int8 || t.is_param()) continue;
    Tensor x{v.shape, v.exp, {}};
    x.data.reserve(v.v.size());
    for (int32_t e : v.v) x.data.push_back(static_cast<int8_t>(e));
    result[name] = std::move(x);
  }
  return result;
}

}  // namespace dpuc::sim
