#include <benchmark/benchmark.h>

#include "setpose/data.hpp"
#include "setpose/matching.hpp"
#include "setpose/model.hpp"
#include "setpose/rng.hpp"
#include "setpose/train.hpp"

namespace {

using namespace setpose;

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  nn::Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) = rng.uniform(-10.0, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(c));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(4, 128)->Complexity();

void BM_RenderSample(benchmark::State& state) {
  GenConfig gen;
  gen.image_height = gen.image_width = static_cast<std::size_t>(state.range(0));
  const SkeletonTopology topo = SkeletonTopology::standard();
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_sample(gen, topo, i++));
}
BENCHMARK(BM_RenderSample)->Arg(32)->Arg(64);

struct TinySetup {
  ModelConfig cfg = ModelConfig::tiny();
  nn::ParamStore params = build_model(cfg, 3);
  SceneSample sample;
  explicit TinySetup(std::size_t size) {
    cfg.image_height = cfg.image_width = size;
    params = build_model(cfg, 3);
    GenConfig gen;
    gen.image_height = gen.image_width = size;
    sample = generate_sample(gen, SkeletonTopology::standard(), 0);
  }
};

void BM_Forward(benchmark::State& state) {
  TinySetup s(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(s.params, s.sample.image, s.cfg));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State& state) {
  TinySetup s(static_cast<std::size_t>(state.range(0)));
  const auto targets = make_targets(s.sample, s.cfg);
  const LossWeights weights;
  const nn::Matrix patches = patchify(s.sample.image, s.cfg.patch_size);
  const Assignment a = match(targets, forward(s.params, s.sample.image, s.cfg), weights);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::forward_backward(s.params, [&](nn::Tape& tape) {
      const ModelGraph g = forward_graph(tape, s.cfg, patches);
      return set_loss_graph(g.class_logits, g.joints, targets, a, weights).total;
    }));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
