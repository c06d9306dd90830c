#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dsp/arch.hpp"
#include "dsp/metrics.hpp"
#include "dsp/pruner.hpp"

using namespace dsp;

namespace {

// input -> conv(k=1, given per-channel scales) -> relu, one block "blk".
ModelGraph scaling_graph(const std::vector<float>& scales, int T) {
  ModelGraph g;
  g.set_meta("toy", T, 2);
  Node in;
  in.kind = NodeKind::Input;
  int i = g.add_node(std::move(in));
  Node conv;
  conv.kind = NodeKind::Conv;
  conv.inputs = {i};
  conv.kernel = 1;
  conv.weight = Tensor(Shape{static_cast<int>(scales.size()), 1, 1});
  for (std::size_t c = 0; c < scales.size(); ++c) conv.weight.at(static_cast<int>(c), 0, 0) = scales[c];
  int cid = g.add_node(std::move(conv));
  int r = g.add_node([&] {
    Node n;
    n.kind = NodeKind::ReLU;
    n.inputs = {cid};
    return n;
  }());
  Node gap;
  gap.kind = NodeKind::GlobalAvgPool;
  gap.inputs = {r};
  int gp = g.add_node(std::move(gap));
  Node lin;
  lin.kind = NodeKind::Linear;
  lin.inputs = {gp};
  lin.weight = Tensor(Shape{2, static_cast<int>(scales.size())}, 0.1f);
  int o = g.add_node(std::move(lin));
  g.set_io(i, o);
  PrunableBlock b;
  b.name = "blk";
  b.capture_node = r;
  b.chan_begin = 0;
  b.chan_end = static_cast<int>(scales.size());
  b.producers = {{cid, 0}};
  g.add_block(std::move(b));
  g.validate();
  return g;
}

Tensor strengths(std::initializer_list<std::initializer_list<double>> rows) {
  int N = static_cast<int>(rows.size());
  int C = static_cast<int>(rows.begin()->size());
  Tensor s(Shape{N, C});
  int i = 0;
  for (auto& r : rows) {
    int c = 0;
    for (double v : r) s.at(i, c++) = static_cast<float>(v);
    ++i;
  }
  return s;
}

ArchConfig lite_cfg(int T = 48, int K = 2) {
  ArchConfig c;
  c.architecture = "lite";
  c.series_length = T;
  c.n_classes = K;
  return c;
}

Tensor random_input(int N, int T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  Tensor x(Shape{N, 1, T});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  return x;
}

}  // namespace

TEST_CASE("strength collection: hand L2, zero channel, batching invariance") {
  ModelGraph g = scaling_graph({1.0f, 0.0f}, 2);
  Tensor x(Shape{1, 1, 2});
  x.at(0, 0, 0) = 3.0f;
  x.at(0, 0, 1) = 4.0f;
  StrengthMatrix s = collect_strengths(g, x);
  CHECK(s.n_samples == 1);
  CHECK(s.s.at("blk").at(0, 0) == doctest::Approx(5.0));
  CHECK(s.s.at("blk").at(0, 1) == doctest::Approx(0.0));

  ModelGraph lite = build_lite(lite_cfg(), 3);
  lite.forward(random_input(8, 48, 1), true);  // batchnorm stats
  Tensor xs = random_input(10, 48, 2);
  StrengthMatrix s1 = collect_strengths(lite, xs, {}, 1);
  StrengthMatrix s64 = collect_strengths(lite, xs, {}, 64);
  for (const auto& [name, m1] : s1.s) {
    const Tensor& m64 = s64.s.at(name);
    for (std::int64_t i = 0; i < m1.size(); ++i) CHECK(std::abs(m1[i] - m64[i]) < 1e-5f);
  }
  CHECK_THROWS_AS(collect_strengths(lite, Tensor(Shape{0, 1, 48})), std::invalid_argument);
}

TEST_CASE("thresholds and mask: hand mean, single channel, tie rule") {
  StrengthMatrix s;
  s.n_samples = 1;
  s.s["blk"] = strengths({{3, 1}});
  PruningMask m = thresholds_and_mask(s);
  CHECK(m.blocks.at("blk").tau[0] == doctest::Approx(2.0));
  CHECK(m.blocks.at("blk").m.at(0, 0) == 1.0f);
  CHECK(m.blocks.at("blk").m.at(0, 1) == 0.0f);

  s.s["blk"] = strengths({{7}});
  m = thresholds_and_mask(s);
  CHECK(m.blocks.at("blk").m.at(0, 0) == 1.0f);  // mean of one: always active

  s.s["blk"] = strengths({{4, 4, 4}});
  m = thresholds_and_mask(s);
  for (int c = 0; c < 3; ++c) CHECK(m.blocks.at("blk").m.at(0, c) == 1.0f);  // >= tie

  // Every row keeps at least one active channel.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> ud(0.0f, 1.0f);
  Tensor r(Shape{20, 8});
  for (std::int64_t i = 0; i < r.size(); ++i) r[i] = ud(rng);
  s.s["blk"] = r;
  s.n_samples = 20;
  m = thresholds_and_mask(s);
  for (int i = 0; i < 20; ++i) {
    float row_max = 0;
    for (int c = 0; c < 8; ++c) row_max = std::max(row_max, m.blocks.at("blk").m.at(i, c));
    CHECK(row_max == 1.0f);
  }
}

TEST_CASE("mask rows are scale invariant per instance") {
  StrengthMatrix s;
  s.n_samples = 2;
  s.s["blk"] = strengths({{1, 2, 5}, {4, 1, 1}});
  PruningMask base = thresholds_and_mask(s);
  s.s["blk"].at(1, 0) *= 13.0f;
  s.s["blk"].at(1, 1) *= 13.0f;
  s.s["blk"].at(1, 2) *= 13.0f;
  PruningMask scaled = thresholds_and_mask(s);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(base.blocks.at("blk").m.at(i, c) == scaled.blocks.at("blk").m.at(i, c));
}

TEST_CASE("consensus plan: column rules, safeguard, size check") {
  ModelGraph g = scaling_graph({1, 1}, 4);
  StrengthMatrix s;
  s.n_samples = 2;
  s.s["blk"] = strengths({{3, 1}, {5, 1}});  // channel 2 inactive everywhere
  PruningMask m = thresholds_and_mask(s);
  PruningPlan p = consensus_plan(m, s, g, 2);
  CHECK(p.remove.at("blk") == std::vector<int>{1});
  CHECK(p.provenance == "dsp-consensus");

  s.s["blk"] = strengths({{3, 1}, {1, 3}});  // each channel active somewhere
  p = consensus_plan(thresholds_and_mask(s), s, g, 2);
  CHECK(p.empty());

  // All-ones mask -> empty plan, identity surgery.
  s.s["blk"] = strengths({{2, 2}, {5, 5}});
  p = consensus_plan(thresholds_and_mask(s), s, g, 2);
  CHECK(p.empty());
  CHECK(count_params(g.apply_surgery(p)) == count_params(g));

  CHECK_THROWS_AS(consensus_plan(m, s, g, 7), std::invalid_argument);

  // Safeguard: hand-built all-zero mask keeps the strongest channel.
  PruningMask dead;
  dead.n_samples = 2;
  dead.blocks["blk"].m = strengths({{0, 0}, {0, 0}});
  dead.blocks["blk"].tau = {1, 1};
  s.s["blk"] = strengths({{1, 4}, {1, 4}});
  p = consensus_plan(dead, s, g, 2);
  CHECK(p.remove.at("blk") == std::vector<int>{0});  // channel 1 is stronger, kept
}

TEST_CASE("consensus equals a naive full-materialization oracle") {
  ModelGraph lite = build_lite(lite_cfg(), 9);
  lite.forward(random_input(16, 48, 3), true);
  Tensor x = random_input(20, 48, 4);

  StrengthMatrix s = collect_strengths(lite, x);
  PruningPlan fast = consensus_plan(thresholds_and_mask(s), s, lite, 20);

  // Naive: one sample at a time, full feature maps, direct Eq. 3-5.
  std::map<std::string, std::vector<int>> naive;
  for (const auto& name : lite.block_names()) {
    int C = lite.block(name).width();
    std::vector<char> ever_active(C, 0);
    for (int i = 0; i < 20; ++i) {
      Tensor one(Shape{1, 1, 48});
      for (int t = 0; t < 48; ++t) one.at(0, 0, t) = x.at(i, 0, t);
      Tensor f = lite.forward(one, false, {name}).captures.at(name);
      std::vector<double> str(C);
      double tau = 0;
      for (int c = 0; c < C; ++c) {
        double ss = 0;
        for (int t = 0; t < 48; ++t) ss += static_cast<double>(f.at(0, c, t)) * f.at(0, c, t);
        str[c] = std::sqrt(ss);
        tau += str[c];
      }
      tau /= C;
      for (int c = 0; c < C; ++c)
        if (static_cast<float>(str[c]) >= static_cast<float>(tau)) ever_active[c] = 1;
    }
    std::vector<int> removal;
    for (int c = 0; c < C; ++c)
      if (!ever_active[c]) removal.push_back(c);
    if (!removal.empty() && static_cast<int>(removal.size()) < C) naive[name] = removal;
  }
  CHECK(fast.remove == naive);
}

TEST_CASE("consensus monotonicity: more samples never grow the removal set") {
  ModelGraph g = scaling_graph({1, 1, 1, 1}, 6);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> ud(0.0f, 1.0f);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor big(Shape{12, 4});
    for (std::int64_t i = 0; i < big.size(); ++i) big[i] = ud(rng);
    Tensor small(Shape{8, 4});
    std::copy(big.data(), big.data() + small.size(), small.data());
    StrengthMatrix ss, sb;
    ss.n_samples = 8;
    ss.s["blk"] = small;
    sb.n_samples = 12;
    sb.s["blk"] = big;
    PruningPlan ps = consensus_plan(thresholds_and_mask(ss), ss, g, 8);
    PruningPlan pb = consensus_plan(thresholds_and_mask(sb), sb, g, 12);
    auto rs = ps.remove.count("blk") ? ps.remove["blk"] : std::vector<int>{};
    auto rb = pb.remove.count("blk") ? pb.remove["blk"] : std::vector<int>{};
    for (int c : rb) CHECK(std::find(rs.begin(), rs.end(), c) != rs.end());
  }
}

TEST_CASE("static plan: counts, ties, errors") {
  ModelGraph g = scaling_graph({1, 1, 1}, 4);
  StrengthMatrix s;
  s.n_samples = 1;
  s.s["blk"] = strengths({{5, 5, 5}});  // full tie: lower indices kept
  PruningPlan p = static_plan(s, g, 2);
  CHECK(p.remove.at("blk") == std::vector<int>{2});
  CHECK(static_plan(s, g, 3).empty());
  CHECK_THROWS_AS(static_plan(s, g, 0), std::invalid_argument);
  CHECK_THROWS_AS(static_plan(s, g, 4), std::invalid_argument);

  s.s["blk"] = strengths({{1, 9, 3}});
  p = static_plan(s, g, 1);
  CHECK(p.remove.at("blk") == std::vector<int>{0, 2});

  ModelGraph lite = build_lite(lite_cfg(), 21);
  lite.forward(random_input(8, 48, 7), true);
  StrengthMatrix ls = collect_strengths(lite, random_input(10, 48, 8));
  PruningPlan lp = static_plan(ls, lite, 16);
  for (const auto& [name, rm] : lp.remove) CHECK(rm.size() == 16);
  CHECK(lp.remove.size() == 5);
}

TEST_CASE("pruning ratio: identity and the published static ladder") {
  ModelGraph lite = build_lite(lite_cfg(128, 2), 2);
  CHECK(pruning_ratio(lite, lite) == doctest::Approx(0.0));

  lite.forward(random_input(8, 128, 9), true);
  StrengthMatrix s = collect_strengths(lite, random_input(12, 128, 10));
  const double expected[3] = {0.558, 0.765, 0.849};
  const int ladder[3] = {16, 8, 4};
  for (int i = 0; i < 3; ++i) {
    ModelGraph pruned = lite.apply_surgery(static_plan(s, lite, ladder[i]));
    double r = pruning_ratio(lite, pruned);
    CHECK(r > 0.0);
    CHECK(r < 1.0);
    CHECK(std::abs(r - expected[i]) < 0.03);
  }
}
