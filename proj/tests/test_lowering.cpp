#include <random>

#include "doctest.h"
#include "dpuc/builder.hpp"
#include "dpuc/lowering.hpp"
#include "oracle.hpp"

using namespace dpuc;
using namespace dpuc::lower;

namespace {

// Input indices touched by outputs [lo, hi), by enumeration.
Range receptive_oracle(Range out, int k, int s, int p, int n) {
  int lo = n, hi = 0;
  for (int o = out.lo; o < out.hi; ++o)
    for (int t = 0; t < k; ++t) {
      const int i = o * s + t - p;
      if (i < 0 || i >= n) continue;
      lo = std::min(lo, i), hi = std::max(hi, i + 1);
    }
  return lo < hi ? Range{lo, hi} : Range{0, 0};
}

OpGeom geom(int h, int w, int c, int k, int s, int p, int co) {
  OpGeom g;
  g.in_h = h, g.in_w = w, g.in_c = c;
  g.win = {k, k, s, s, p, p};
  g.out_h = (h + 2 * p - k) / s + 1, g.out_w = (w + 2 * p - k) / s + 1, g.out_c = co;
  return g;
}

void check_partition(const std::vector<TileNode>& kids, bool rows, int extent) {
  int next = 0;
  for (auto& c : kids) {
    const Range r = rows ? c.out_rows : c.out_cols;
    CHECK(r.lo == next);
    CHECK(r.size() > 0);
    next = r.hi;
  }
  CHECK(next == extent);
}

}  // namespace

TEST_CASE("receptive ranges match enumeration") {
  for (int k : {1, 2, 3, 5})
    for (int s : {1, 2, 3})
      for (int p = 0; p < k; ++p)
        for (int lo = 0; lo < 6; ++lo)
          for (int hi = lo + 1; hi < 8; ++hi) {
            const int n = (hi + 2) * s + k;
            const Range want = receptive_oracle({lo, hi}, k, s, p, n);
            CHECK(receptive({lo, hi}, k, s, p, n) == want);
          }
}

TEST_CASE("width split keeps every row vector under the limit") {
  hw::MachineConfig cfg;
  for (int64_t gamma : {8192, 1024, 512, 256}) {
    cfg.gamma = gamma;
    for (auto g : {geom(16, 40, 8, 3, 1, 1, 8), geom(16, 41, 4, 5, 2, 2, 16), geom(8, 12, 16, 1, 1, 0, 16)}) {
      const TileNode t = w_split(g, cfg);
      REQUIRE(!t.children.empty());
      check_partition(t.children, false, g.out_w);
      const int cw = t.children[0].out_cols.size();
      for (auto& c : t.children) {
        CHECK(c.out_cols.size() <= cw);
        CHECK(int64_t{c.out_cols.size()} * g.out_c <= gamma);
        CHECK(int64_t{c.in_cols.size()} * g.in_c <= gamma);
        CHECK(c.in_cols == receptive_oracle(c.out_cols, g.win.kw, g.win.sw, g.win.pw, g.in_w));
      }
      if (int64_t{g.in_w} * g.in_c <= gamma && int64_t{g.out_w} * g.out_c <= gamma) CHECK(t.children.size() == 1);
    }
  }
  cfg.gamma = 8;
  CHECK_THROWS_AS(w_split(geom(8, 8, 16, 3, 1, 1, 16), cfg), InfeasibleError);
}

TEST_CASE("width split of a 3x3 stride-1 conv over 20 columns into two chunks") {
  hw::MachineConfig cfg;
  const OpGeom g = geom(4, 20, 10, 3, 1, 1, 10);
  cfg.gamma = 120;
  const TileNode t = w_split(g, cfg);
  REQUIRE(t.children.size() == 2);
  CHECK(t.children[0].out_cols == Range{0, 10});
  CHECK(t.children[0].in_cols == Range{0, 11});
  CHECK(t.children[1].out_cols == Range{10, 20});
  CHECK(t.children[1].in_cols == Range{9, 20});
}

TEST_CASE("height split bands") {
  const hw::MachineConfig cfg;
  const OpGeom g = geom(30, 16, 8, 5, 1, 2, 8);
  const TileNode t = h_split(g, {0, g.out_w}, 8, cfg);
  check_partition(t.children, true, g.out_h);
  for (auto& c : t.children) {
    CHECK(c.out_rows.size() <= 8);
    CHECK(c.in_rows == receptive_oracle(c.out_rows, 5, 1, 2, g.in_h));
  }
  CHECK(t.children.size() == 4);
  hw::MachineConfig tiny = cfg;
  tiny.fm_banks = 1, tiny.fm_bank_rows = 24;
  CHECK(h_split(g, {0, g.out_w}, 8, tiny).children[0].out_rows.size() == 2);
  tiny.fm_bank_rows = 4;
  CHECK_THROWS_AS(h_split(g, {0, g.out_w}, 8, tiny), InfeasibleError);
  CHECK(fm_row_pitch(65, cfg) == 128);
}

TEST_CASE("fusion plan of conv5x5 with 2x2/2 pooling") {
  const hw::MachineConfig cfg;
  const auto p = plan_fusion(geom(68, 16, 8, 5, 1, 0, 8), graph::OpKind::MaxPool, {2, 2, 2, 2, 0, 0}, cfg);
  REQUIRE(p.enabled);
  CHECK(p.conv_h == 8);
  CHECK(p.consumer_h == 2);
  CHECK(p.consumer_out_h == 1);
  CHECK(p.k == 4);
  CHECK(p.footprint == 2);
}

TEST_CASE("fusion plan with an eltwise consumer and a disabled case") {
  hw::MachineConfig cfg;
  const auto e = plan_fusion(geom(16, 16, 8, 3, 1, 1, 8), graph::OpKind::EltwiseAdd, {}, cfg);
  REQUIRE(e.enabled);
  CHECK(e.k * e.consumer_h == e.conv_h);
  CHECK(e.consumer_h == e.consumer_out_h);
  cfg.h_conv = 1;
  const auto d = plan_fusion(geom(16, 16, 8, 3, 1, 1, 8), graph::OpKind::MaxPool, {2, 2, 2, 2, 0, 0}, cfg);
  CHECK_FALSE(d.enabled);
  CHECK_FALSE(d.reason.empty());
}

TEST_CASE("deconvolution phases reproduce the transposed convolution") {
  std::mt19937 rng(5);
  for (int k = 2; k <= 7; ++k)
    for (int p = 0; p < k; ++p) {
      graph::Builder b(k * 10 + p);
      const auto x = b.input("x", {5, 6, 2}, 0);
      const auto g = b.finish({b.conv(x, "y", 3, k, 2, p, false, false, graph::OpKind::Deconv)});
      const auto& n = g.nodes.back();
      const auto& w = *n.params;
      oracle::Real in{5, 6, 2, {}};
      for (int i = 0; i < 5 * 6 * 2; ++i) in.v.push_back(static_cast<double>(static_cast<int>(rng() % 21) - 10));
      graph::Node nb = n;
      nb.params->bias.clear();
      const int oh = g.tensor("y").shape.h, ow = g.tensor("y").shape.w;
      const auto want = oracle::deconv(in, nb, 0, oh, ow);
      const auto phases = decompose_deconv(w, 2, p, 5, 6);
      REQUIRE(phases.size() == 4);
      oracle::Real got{oh, ow, 3, std::vector<double>(size_t(oh) * ow * 3, 0.0)};
      std::vector<int> hits(size_t(oh) * ow, 0);
      for (auto& ph : phases) {
        const int th = static_cast<int>(ph.taps_h.size()), tw = static_cast<int>(ph.taps_w.size());
        for (int j = 0; j < ph.out_h; ++j)
          for (int l = 0; l < ph.out_w; ++l) {
            const int r = ph.phase_h + 2 * j, c = ph.phase_w + 2 * l;
            REQUIRE(r < oh);
            REQUIRE(c < ow);
            ++hits[size_t(r) * ow + c];
            for (int o = 0; o < 3; ++o) {
              double s = 0;
              for (int a = 0; a < th; ++a)
                for (int bb = 0; bb < tw; ++bb) {
                  const int iy = ph.off_h + j + a, ix = ph.off_w + l + bb;
                  if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
                  for (int i = 0; i < 2; ++i)
                    s += in.at(iy, ix, i) * std::ldexp(ph.weights[((size_t(o) * th + a) * tw + bb) * 2 + i], w.weight_exp);
                }
              got.at(r, c, o) = s;
            }
          }
      }
      INFO("k=" << k << " p=" << p);
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
      CHECK(got.v == want.v);
    }
}

TEST_CASE("deconvolution limits") {
  graph::WeightSpec w;
  w.co = 1, w.kh = w.kw = 3, w.ci = 1;
  w.weights.assign(9, 1);
  CHECK_THROWS_AS(decompose_deconv(w, 3, 1, 4, 4), UnsupportedError);
  w.kh = w.kw = 1;
  w.weights.assign(1, 1);
  CHECK_THROWS_AS(decompose_deconv(w, 2, 0, 4, 4), UnsupportedError);
}

TEST_CASE("weight slabs") {
  hw::MachineConfig cfg;
  graph::WeightSpec w;
  w.co = 64, w.kh = w.kw = 5, w.ci = 64;
  const auto slabs = weight_tiling(w, cfg);
  CHECK(slabs.size() >= 2);
  int next = 0;
  for (auto& s : slabs) {
    CHECK(s.co.lo == next);
    next = s.co.hi;
    CHECK(s.bytes() <= cfg.pm_bytes / 2);
    CHECK(s.weight_bytes == int64_t{s.co.size()} * 25 * 64);
    CHECK(s.bias_bytes == 4 * s.co.size());
  }
  CHECK(next == 64);
  w.co = 8;
  const auto one = weight_tiling(w, cfg);
  REQUIRE(one.size() == 1);
  CHECK(one[0].co == Range{0, 8});
  cfg.pm_bytes = 1024;
  CHECK_THROWS_AS(weight_tiling(w, cfg), InfeasibleError);
}
