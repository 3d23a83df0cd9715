#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "atrium/data/phantom.hpp"
#include "atrium/data/preprocess.hpp"
#include "atrium/eval/metrics.hpp"
#include "atrium/eval/morphology.hpp"
#include "atrium/head/seg_head.hpp"
#include "atrium/models/zoo.hpp"
#include "atrium/vit/backbone.hpp"

using namespace atrium;

namespace {

torch::Tensor random_mask(std::int64_t side, std::uint64_t seed) {
  torch::manual_seed(seed);
  return (torch::rand({side, side}) > 0.5).to(torch::kUInt8);
}

void BM_Dice(benchmark::State& state) {
  const auto side = state.range(0);
  auto a = random_mask(side, 1), b = random_mask(side, 2);
  for (auto _ : state) benchmark::DoNotOptimize(eval::dice(a, b));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_Dice)->Arg(64)->Arg(320)->Arg(640);

void BM_PostprocessBaseline(benchmark::State& state) {
  auto mask = random_mask(state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(eval::postprocess_baseline(mask));
}
BENCHMARK(BM_PostprocessBaseline)->Arg(320)->Unit(benchmark::kMicrosecond);

void BM_Patchify(benchmark::State& state) {
  auto image = torch::rand({3, 448, 448});
  for (auto _ : state) benchmark::DoNotOptimize(vit::patchify(image).contiguous());
}
BENCHMARK(BM_Patchify)->Unit(benchmark::kMicrosecond);

void BM_ZScore(benchmark::State& state) {
  auto image = torch::rand({320, 320});
  for (auto _ : state) benchmark::DoNotOptimize(data::zscore(image));
}
BENCHMARK(BM_ZScore)->Unit(benchmark::kMicrosecond);

void BM_PhantomVolume(benchmark::State& state) {
  data::PhantomSpec spec;
  spec.n_volumes = 1;
  for (auto _ : state) benchmark::DoNotOptimize(data::generate_phantom(spec));
}
BENCHMARK(BM_PhantomVolume)->Unit(benchmark::kMillisecond);

// Head forward on a cached token grid (the per-step cost of ViT head training).
void BM_HeadForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  head::HeadConfig config;
  config.embed_dim = state.range(0);
  config.channels = 128;
  config.output_size = 448;
  head::SegmentationHead h(config);
  auto tokens = torch::randn({1, 32, 32, config.embed_dim});
  for (auto _ : state) benchmark::DoNotOptimize(h->forward(tokens));
}
BENCHMARK(BM_HeadForward)->Arg(768)->Arg(1536)->Unit(benchmark::kMillisecond);

void BM_UNetForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  auto spec = models::ModelSpec::defaults(models::Architecture::kUNet);
  spec.input_size = 64;
  spec.base_channels = 16;
  auto model = models::build_model(spec, 0);
  model->eval();
  auto x = torch::randn({1, 1, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x));
}
BENCHMARK(BM_UNetForward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
