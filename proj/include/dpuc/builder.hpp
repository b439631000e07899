#pragma once

// Programmatic construction of graphs with random int8 parameters.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dpuc/graph.hpp"

namespace dpuc::graph {

class Builder {
 public:
  explicit Builder(uint64_t seed) : rng_(seed) {}

  std::string input(const std::string& name, Shape s, int exp);
  // Convolution (or deconvolution, stride s) with embedded parameters, or
  // with parameter nodes and quantizers when `unfolded` is set.
  std::string conv(const std::string& x, const std::string& out, int co, int k, int s, int p, bool relu, bool unfolded,
                   OpKind op = OpKind::Conv);
  std::string maxpool(const std::string& x, const std::string& out, int k, int s, int p = 0);
  std::string add(const std::string& a, const std::string& b, const std::string& out, bool relu);
  std::string upsample(const std::string& x, const std::string& out, int factor);
  std::string concat(const std::vector<std::string>& xs, const std::string& out, int exp);
  int exp(const std::string& t) const { return g_.tensor(t).quant.exponent(); }
  Graph finish(std::vector<std::string> outputs);

 private:
  TensorRef& add_tensor(const std::string& name, Shape s, int exp);
  void add_param(const std::string& name, std::vector<int> dims, DType dt, int exp, const std::vector<int32_t>& v);
  void fix(const std::string& from, const std::string& to);
  WeightSpec weights(int co, int k, int ci, int ew, int eb);

  Graph g_;
  int next_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace dpuc::graph
