#include <benchmark/benchmark.h>

#include <random>

#include "dsp/arch.hpp"
#include "dsp/metrics.hpp"
#include "dsp/ops.hpp"
#include "dsp/pruner.hpp"
#include "dsp/tape.hpp"

using namespace dsp;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

ArchConfig arch_cfg(const std::string& name, int T = 128, int K = 2) {
  ArchConfig c;
  c.architecture = name;
  c.series_length = T;
  c.n_classes = K;
  return c;
}

void BM_Conv1dForward(benchmark::State& state) {
  const int B = 32, Ci = static_cast<int>(state.range(0)), Co = 32, T = 128, K = 40;
  Tensor x = random_tensor({B, Ci, T}, 1), w = random_tensor({Co, Ci, K}, 2);
  Tensor b = random_tensor({Co}, 3);
  for (auto _ : state) {
    Tape<float> tape;
    int out = ops::conv1d(tape, tape.leaf(x), tape.leaf(w), tape.leaf(b), 1);
    benchmark::DoNotOptimize(tape.value(out).data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B) * Co * Ci * K * T);
}
BENCHMARK(BM_Conv1dForward)->Arg(1)->Arg(32)->Arg(128);

void BM_Conv1dTrainStep(benchmark::State& state) {
  const int B = 32, Ci = 32, Co = 32, T = 128, K = 40;
  Tensor x = random_tensor({B, Ci, T}, 1), w = random_tensor({Co, Ci, K}, 2);
  Tensor b = random_tensor({Co}, 3);
  for (auto _ : state) {
    Tape<float> tape;
    int wp = tape.parameter(w, 0), bp = tape.parameter(b, 1);
    int out = ops::conv1d(tape, tape.leaf(x), wp, bp, 1);
    int loss = ops::l21_channel_norm(tape, out);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.param_grad(0));
  }
}
BENCHMARK(BM_Conv1dTrainStep);

void BM_DepthwiseSeparableForward(benchmark::State& state) {
  const int B = 32, C = 32, T = 128;
  Tensor x = random_tensor({B, C, T}, 4), dw = random_tensor({C, 1, 20}, 5);
  Tensor pw = random_tensor({C, C, 1}, 6);
  for (auto _ : state) {
    Tape<float> tape;
    int out = ops::depthwise_separable_conv1d(tape, tape.leaf(x), tape.leaf(dw),
                                              tape.leaf(pw), 2);
    benchmark::DoNotOptimize(tape.value(out).data());
  }
}
BENCHMARK(BM_DepthwiseSeparableForward);

void BM_ModelForward(benchmark::State& state) {
  const bool inception = state.range(0);
  ModelGraph g = build_model(arch_cfg(inception ? "inception" : "lite"), 7);
  g.forward(random_tensor({8, 1, 128}, 8), true);  // warm batchnorm stats
  Tensor x = random_tensor({32, 1, 128}, 9);
  for (auto _ : state) {
    auto out = g.forward(x, false);
    benchmark::DoNotOptimize(out.logits.data());
  }
  state.SetLabel(inception ? "inception" : "lite");
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1);

void BM_StrengthCollection(benchmark::State& state) {
  ModelGraph g = build_model(arch_cfg("lite"), 10);
  g.forward(random_tensor({8, 1, 128}, 11), true);
  Tensor x = random_tensor({64, 1, 128}, 12);
  for (auto _ : state) {
    StrengthMatrix s = collect_strengths(g, x);
    benchmark::DoNotOptimize(s.n_samples);
  }
}
BENCHMARK(BM_StrengthCollection);

void BM_EffectiveRank(benchmark::State& state) {
  const int C = static_cast<int>(state.range(0));
  Tensor f = random_tensor({C, 128}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(effective_rank(f));
}
BENCHMARK(BM_EffectiveRank)->Arg(8)->Arg(32)->Arg(113);

}  // namespace

BENCHMARK_MAIN();
