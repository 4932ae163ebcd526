#include <benchmark/benchmark.h>

#include <memory>

#include "varpred/metrics.hpp"
#include "varpred/nn/layers.hpp"
#include "varpred/random.hpp"
#include "varpred/reference_generators.hpp"
#include "varpred/training.hpp"

using namespace varpred;

namespace {

Tensor<float> random_images(int n, int channels, int size, Seed seed) {
  Tensor<float> t({n, channels, size, size});
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void BM_ConvForward(benchmark::State& state) {
  Rng rng(1);
  const int channels = static_cast<int>(state.range(0));
  nn::Conv2d<float> conv(channels, 2 * channels, 4, 2, 1, rng);
  const Tensor<float> x = random_images(64, channels, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ConvForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(1);
  const int channels = static_cast<int>(state.range(0));
  nn::Conv2d<float> conv(channels, 2 * channels, 4, 2, 1, rng);
  const Tensor<float> x = random_images(64, channels, 32, 2);
  const Tensor<float> gy = conv.forward_train(x);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(gy));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ConvBackward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

const std::shared_ptr<const FactorDataset>& small_data() {
  static const auto data = std::make_shared<const FactorDataset>(resolve_dataset(kDatasetSmall));
  return data;
}

void BM_TrainingStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.model = static_cast<ModelKind>(state.range(0));
  cfg.width = 4;
  cfg.dataset = kDatasetSmall;
  cfg.steps = 1 << 30;
  TrainingSession session(cfg, small_data());
  for (auto _ : state) benchmark::DoNotOptimize(session.advance());
  state.SetLabel(to_string(cfg.model));
}
BENCHMARK(BM_TrainingStep)
    ->Arg(static_cast<int>(ModelKind::gan))
    ->Arg(static_cast<int>(ModelKind::vpgan))
    ->Arg(static_cast<int>(ModelKind::betavae))
    ->Arg(static_cast<int>(ModelKind::vae_vp))
    ->Unit(benchmark::kMillisecond);

void BM_VpMetricTrial(benchmark::State& state) {
  const BlockOracleGenerator g(6, {1, 32, 32});
  VpMetricConfig cfg;
  cfg.samples = static_cast<int>(state.range(0));
  Seed seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(vp_metric_trial(g, cfg, ++seed));
}
BENCHMARK(BM_VpMetricTrial)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
