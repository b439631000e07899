#include "dpuc/builder.hpp"

#include <algorithm>
#include <cmath>

namespace dpuc::graph {

namespace {

QuantInfo q8(int e) {
  const double s = std::ldexp(1.0, e);
  return {-128 * s, 127 * s, s};
}

// keeps typical outputs well inside the int8 range
int output_exp(int ex, int ew, int taps) {
  const double rms = std::sqrt(static_cast<double>(taps)) * 9.0;
  return ex + ew + static_cast<int>(std::lround(std::log2(rms)));
}

}  // namespace

std::string Builder::input(const std::string& name, Shape s, int exp) {
  add_tensor(name, s, exp);
  Node n;
  n.id = next_++;
  n.op = OpKind::Input;
  n.output = name;
  g_.nodes.push_back(n);
  g_.inputs.push_back(name);
  return name;
}

std::string Builder::conv(const std::string& x, const std::string& out, int co, int k, int s, int p, bool relu,
                          bool unfolded, OpKind op) {
  const auto xt = g_.tensor(x);
  const int ex = xt.quant.exponent(), ci = xt.shape.c, ew = -6;
  const bool de = op == OpKind::Deconv;
  const int eo = output_exp(ex, ew, de ? std::max(1, k * k / (s * s)) * ci : k * k * ci);
  WeightSpec w = weights(co, k, ci, ew, ex + ew);
  Node n;
  n.id = next_++;
  n.op = op;
  n.win = {k, k, de ? 1 : s, de ? 1 : s, p, p};
  n.factor = de ? s : 1;
  n.relu = relu;
  n.inputs = {x};
  Shape os;
  if (de) os = {xt.shape.h * s + 2 * p - k + 1, xt.shape.w * s + 2 * p - k + 1, co};
  else os = {(xt.shape.h + 2 * p - k) / s + 1, (xt.shape.w + 2 * p - k) / s + 1, co};
  if (!unfolded) {
    n.params = std::move(w);
    n.output = out;
    add_tensor(out, os, eo);
    g_.nodes.push_back(n);
    return out;
  }
  // weights stored one step finer and requantized by a quantizer
  std::vector<int32_t> wv;
  for (int8_t v : w.weights) wv.push_back(2 * v);
  const std::string wraw = out + "/w_raw", wq = out + "/w", b = out + "/b", acc = out + "/acc";
  add_param(wraw, {co, k, k, ci}, DType::Int8, ew - 1, wv);
  add_tensor(wq, {}, ew).dims = {co, k, k, ci};
  fix(wraw, wq);
  add_param(b, {co}, DType::Int32, w.bias_exp, w.bias);
  n.inputs = {x, wq, b};
  n.output = acc;
  add_tensor(acc, os, ex + ew).dtype = DType::Int32;
  g_.nodes.push_back(n);
  add_tensor(out, os, eo);
  fix(acc, out);
  return out;
}

std::string Builder::maxpool(const std::string& x, const std::string& out, int k, int s, int p) {
  const auto xt = g_.tensor(x);
  Node n;
  n.id = next_++;
  n.op = OpKind::MaxPool;
  n.win = {k, k, s, s, p, p};
  n.inputs = {x};
  n.output = out;
  add_tensor(out, {(xt.shape.h + 2 * p - k) / s + 1, (xt.shape.w + 2 * p - k) / s + 1, xt.shape.c}, xt.quant.exponent());
  g_.nodes.push_back(n);
  return out;
}

std::string Builder::add(const std::string& a, const std::string& b, const std::string& out, bool relu) {
  const auto at = g_.tensor(a);
  Node n;
  n.id = next_++;
  n.op = OpKind::EltwiseAdd;
  n.relu = relu;
  n.inputs = {a, b};
  n.output = out;
  add_tensor(out, at.shape, std::max(at.quant.exponent(), g_.tensor(b).quant.exponent()) + 1);
  g_.nodes.push_back(n);
  return out;
}

std::string Builder::upsample(const std::string& x, const std::string& out, int factor) {
  const auto xt = g_.tensor(x);
  Node n;
  n.id = next_++;
  n.op = OpKind::Upsample;
  n.factor = factor;
  n.inputs = {x};
  n.output = out;
  add_tensor(out, {xt.shape.h * factor, xt.shape.w * factor, xt.shape.c}, xt.quant.exponent());
  g_.nodes.push_back(n);
  return out;
}

std::string Builder::concat(const std::vector<std::string>& xs, const std::string& out, int exp) {
  Node n;
  n.id = next_++;
  n.op = OpKind::Concat;
  n.inputs = xs;
  n.output = out;
  Shape s = g_.tensor(xs[0]).shape;
  s.c = 0;
  for (auto& x : xs) s.c += g_.tensor(x).shape.c;
  add_tensor(out, s, exp);
  g_.nodes.push_back(n);
  return out;
}

Graph Builder::finish(std::vector<std::string> outputs) {
  g_.outputs = std::move(outputs);
  validate(g_);
  return g_;
}

TensorRef& Builder::add_tensor(const std::string& name, Shape s, int exp) {
  TensorRef t;
  t.name = name;
  t.shape = s;
  t.quant = q8(exp);
  return g_.tensors[name] = t;
}

void Builder::add_param(const std::string& name, std::vector<int> dims, DType dt, int exp, const std::vector<int32_t>& v) {
  auto& t = add_tensor(name, {}, exp);
  t.dims = std::move(dims);
  t.dtype = dt;
  Node n;
  n.id = next_++;
  n.op = OpKind::Param;
  n.output = name;
  n.constant = ParamData{v};
  g_.nodes.push_back(n);
}

void Builder::fix(const std::string& from, const std::string& to) {
  Node n;
  n.id = next_++;
  n.op = OpKind::FixNeuron;
  n.inputs = {from};
  n.output = to;
  g_.nodes.push_back(n);
}

WeightSpec Builder::weights(int co, int k, int ci, int ew, int eb) {
  WeightSpec w;
  w.co = co, w.kh = k, w.kw = k, w.ci = ci;
  w.weight_exp = ew;
  w.bias_exp = eb;
  std::uniform_int_distribution<int> wd(-15, 15), bd(-2000, 2000);
  for (int64_t i = 0; i < int64_t{co} * k * k * ci; ++i) w.weights.push_back(static_cast<int8_t>(wd(rng_)));
  for (int i = 0; i < co; ++i) w.bias.push_back(bd(rng_));
  return w;
}

}  // namespace dpuc::graph
